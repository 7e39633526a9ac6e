#pragma once

#include "sfea/image.hpp"
#include "sfea/nn.hpp"

namespace sfea {

struct EnhanceOutput {
    ImageTensor enhanced;   // bounded by the sigmoid head
    MaskTensor mask_pred;   // per-pixel softmax probabilities
};

// Skip-connected encoder/decoder enhancer with a segmentation decoder that
// taps the image decoder's per-level features laterally. Channel width at
// level i is base_channels << i; every conv is 3x3 followed by SiLU except
// the two heads (sigmoid image head, softmax mask head).
//
// Layer roster, in flattening order:
//   enc1[0], enc2[0], ..., enc1[d-1], enc2[d-1],
//   dec_up[d-2], dec_fuse[d-2], ..., dec_up[0], dec_fuse[0],
//   seg_lat,
//   seg_up[d-2], seg_fuse[d-2], ..., seg_up[0], seg_fuse[0],
//   enh_head, seg_head
struct EnhancerModel {
    int depth = 0;
    int base_channels = 0;
    int num_classes = 0;
    std::vector<ConvLayer> layers;

    static EnhancerModel init(int depth, int base_channels, int num_classes, std::uint64_t seed);

    int ch(int level) const { return base_channels << level; }
    int enc1_idx(int i) const { return 2 * i; }
    int enc2_idx(int i) const { return 2 * i + 1; }
    int dec_up_idx(int i) const { return 2 * depth + 2 * (depth - 2 - i); }
    int dec_fuse_idx(int i) const { return dec_up_idx(i) + 1; }
    int seg_lat_idx() const { return 2 * depth + 2 * (depth - 1); }
    int seg_up_idx(int i) const { return seg_lat_idx() + 1 + 2 * (depth - 2 - i); }
    int seg_fuse_idx(int i) const { return seg_up_idx(i) + 1; }
    int enh_head_idx() const { return seg_lat_idx() + 1 + 2 * (depth - 1); }
    int seg_head_idx() const { return enh_head_idx() + 1; }

    bool same_arch(const EnhancerModel& o) const {
        return depth == o.depth && base_channels == o.base_channels && num_classes == o.num_classes;
    }
    std::uint64_t digest() const { return params_digest(layers); }
};

EnhanceOutput forward(const EnhancerModel& model, const ImageTensor& x);

// Mean absolute difference over all elements.
double loss_enhance(const ImageTensor& pred, const ImageTensor& target);

// Pixel-mean cross-entropy of predicted probabilities against a one-hot
// target; probabilities clamped to [1e-7, 1] before the log.
double loss_structure(const MaskTensor& pred, const MaskTensor& target);

// loss_enhance + lambda_s * loss_structure.
double loss_source(const EnhanceOutput& out, const ImageTensor& y, const MaskTensor& m,
                   double lambda_s);

struct LossParts {
    double total = 0.0;
    double enhance = 0.0;
    double structure = 0.0;
};

// Forward + analytic backward of the weighted composite loss; parameter
// gradients are accumulated (+=) into grads so callers can batch.
LossParts loss_and_backward(const EnhancerModel& model, const ImageTensor& x,
                            const ImageTensor& y, const MaskTensor& m, double lambda,
                            Gradients& grads);

// teacher <- decay * teacher + (1 - decay) * student, parameter-wise. decay 1
// leaves the teacher bitwise untouched; decay 0 copies the student bitwise.
void ema_update(EnhancerModel& teacher, const EnhancerModel& student, double decay);

}  // namespace sfea
