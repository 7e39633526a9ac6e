#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace sfea {

// Violated precondition or malformed request. CLI maps this to exit code 2.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Unusable input data (missing files, bad formats, empty sets). Exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failure during computation (NaN loss, diverged training). Exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic RNG. mt19937_64 supplies the bits; the mappings to doubles are
// spelled out here instead of using std::*_distribution, whose output is
// implementation-defined and would break cross-platform reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    bool coin() { return (gen_() & 1u) != 0; }

    // Standard normal via Box-Muller (no cached second value).
    double normal() {
        double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Derived independent stream (splitmix-style mix of seed and stream id).
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_mix_ + stream * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    static Rng forked(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed);
        r.seed_mix_ = seed;
        return r.fork(stream);
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_mix_ = 0;
};

// FNV-1a over raw bytes; used for parameter/pixel digests in tests and logs.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t digest_doubles(std::span<const double> v, std::uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a(v.data(), v.size() * sizeof(double), h);
}

}  // namespace sfea
