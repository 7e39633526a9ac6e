#pragma once

#include <string>
#include <vector>

#include "sfea/enhancer.hpp"

namespace sfea {

// Enhancer checkpoints are a little-endian binary parameter archive next to a
// human-readable JSON sidecar (<path>.json) carrying the bookkeeping fields.
struct CheckpointMeta {
    int format_version = 1;
    std::string stage;  // "source" or "adapted"
    std::uint64_t seed = 0;
    int epoch = 0;
};

void save_enhancer(const EnhancerModel& model, const CheckpointMeta& meta,
                   const std::string& path);
EnhancerModel load_enhancer(const std::string& path, CheckpointMeta* meta_out = nullptr);

// Shared low-level archive layout used by every checkpoint kind:
// magic(8) | u32 version | i32 header fields | u64 count | count doubles.
void write_blob(const std::string& path, const char magic[9], const std::vector<int>& header,
                std::span<const double> params);
struct Blob {
    std::vector<int> header;
    std::vector<double> params;
};
Blob read_blob(const std::string& path, const char magic[9], std::size_t header_ints);

}  // namespace sfea
