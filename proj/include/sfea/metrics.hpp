#pragma once

#include <vector>

#include "sfea/image.hpp"

namespace sfea {

// Windowed structural similarity over all fully-interior 11x11 windows
// (Gaussian weights, sigma 1.5, C1=(0.01)^2, C2=(0.03)^2, dynamic range 1.0),
// averaged over windows and channels. Symmetric in its arguments.
double ssim(const ImageTensor& a, const ImageTensor& b);

// 10*log10(1/MSE) with peak 1.0; returns +infinity when the images are equal.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Per-class overlap of argmax-discretized masks. A class absent from both
// masks counts as a perfect match (1.0) so tiny toy masks stay NaN-free.
struct DiceIou {
    std::vector<double> dice;
    std::vector<double> iou;
    double mean_dice() const;
    double mean_iou() const;
};

DiceIou dice_iou(const MaskTensor& pred, const MaskTensor& ref);

// Aggregate over an evaluation set; mean fields are plain arithmetic means
// of the per-sample values.
struct MetricReport {
    double ssim = 0.0;
    double psnr = 0.0;
    std::vector<double> dice;  // per-class, averaged over samples
    std::vector<double> iou;
    double dice_mean = 0.0;
    double iou_mean = 0.0;
    int n_samples = 0;
};

}  // namespace sfea
