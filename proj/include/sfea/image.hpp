#pragma once

#include <utility>

#include "sfea/tensor.hpp"

namespace sfea {

// Minimum spatial size accepted for images; windowed SSIM needs at least the
// 11x11 window plus margin.
inline constexpr int kMinImageSide = 16;

// RGB image with every value finite and in [0, 1].
class ImageTensor {
public:
    explicit ImageTensor(Tensor t) : t_(std::move(t)) { validate(); }

    static ImageTensor constant(int h, int w, double v) {
        return ImageTensor(Tensor(h, w, 3, v));
    }

    const Tensor& tensor() const { return t_; }
    int height() const { return t_.height(); }
    int width() const { return t_.width(); }

    double at(int y, int x, int c) const { return t_.at(y, x, c); }

    bool same_shape(const ImageTensor& o) const { return t_.same_shape(o.t_); }
    std::uint64_t digest() const { return t_.digest(); }

private:
    void validate() const;
    Tensor t_;
};

enum class MaskKind { GroundTruth, Predicted };

// Per-pixel class representation: exact one-hot ground truth or a predicted
// probability field whose pixel vectors sum to 1.
class MaskTensor {
public:
    MaskTensor(Tensor t, MaskKind kind) : t_(std::move(t)), kind_(kind) { validate(); }

    // Builds a one-hot ground-truth mask from integer class labels.
    static MaskTensor from_labels(int h, int w, int num_classes, std::span<const int> labels);

    const Tensor& tensor() const { return t_; }
    MaskKind kind() const { return kind_; }
    int height() const { return t_.height(); }
    int width() const { return t_.width(); }
    int num_classes() const { return t_.channels(); }

    int label_at(int y, int x) const;          // argmax class
    MaskTensor argmax_onehot() const;          // re-one-hotted copy, GroundTruth kind

    bool same_shape(const MaskTensor& o) const { return t_.same_shape(o.t_); }
    std::uint64_t digest() const { return t_.digest(); }

private:
    void validate() const;
    Tensor t_;
    MaskKind kind_;
};

}  // namespace sfea
