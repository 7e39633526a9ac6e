#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sfea/common.hpp"

namespace sfea {

// Dense H x W x C array of doubles, channel-last row-major:
// element (y, x, c) lives at data[(y * W + x) * C + c].
class Tensor {
public:
    Tensor() = default;
    Tensor(int h, int w, int c, double fill = 0.0) : h_(h), w_(w), c_(c) {
        if (h <= 0 || w <= 0 || c <= 0) throw ContractError("Tensor: dimensions must be positive");
        data_.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    static Tensor from_data(int h, int w, int c, std::vector<double> data) {
        Tensor t(h, w, c);
        if (data.size() != t.data_.size()) throw ContractError("Tensor::from_data: size mismatch");
        t.data_ = std::move(data);
        return t;
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c) { return data_[(static_cast<std::size_t>(y) * w_ + x) * c_ + c]; }
    double at(int y, int x, int c) const { return data_[(static_cast<std::size_t>(y) * w_ + x) * c_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

    bool same_shape(const Tensor& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }

    std::string shape_str() const {
        return std::to_string(h_) + "x" + std::to_string(w_) + "x" + std::to_string(c_);
    }

    std::uint64_t digest() const { return digest_doubles(data_); }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

}  // namespace sfea
