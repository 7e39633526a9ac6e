#include "sfea/image.hpp"

#include <cmath>

namespace sfea {

void ImageTensor::validate() const {
    if (t_.channels() != 3) throw ContractError("ImageTensor: expected 3 channels, got " + std::to_string(t_.channels()));
    if (t_.height() < kMinImageSide || t_.width() < kMinImageSide)
        throw ContractError("ImageTensor: spatial dims must be >= " + std::to_string(kMinImageSide) +
                            ", got " + t_.shape_str());
    for (double v : t_.values()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw ContractError("ImageTensor: values must be finite and in [0,1]");
    }
}

MaskTensor MaskTensor::from_labels(int h, int w, int num_classes, std::span<const int> labels) {
    if (num_classes < 2) throw ContractError("MaskTensor: need at least 2 classes");
    if (labels.size() != static_cast<std::size_t>(h) * w) throw ContractError("MaskTensor::from_labels: label count mismatch");
    Tensor t(h, w, num_classes);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int c = labels[static_cast<std::size_t>(y) * w + x];
            if (c < 0 || c >= num_classes) throw ContractError("MaskTensor::from_labels: label out of range");
            t.at(y, x, c) = 1.0;
        }
    return MaskTensor(std::move(t), MaskKind::GroundTruth);
}

void MaskTensor::validate() const {
    if (t_.channels() < 2) throw ContractError("MaskTensor: need at least 2 classes, got " + std::to_string(t_.channels()));
    const int h = t_.height(), w = t_.width(), c = t_.channels();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            int ones = 0;
            for (int k = 0; k < c; ++k) {
                double v = t_.at(y, x, k);
                if (!std::isfinite(v) || v < 0.0) throw ContractError("MaskTensor: values must be finite and nonnegative");
                if (kind_ == MaskKind::GroundTruth && v != 0.0 && v != 1.0)
                    throw ContractError("MaskTensor: ground-truth mask must be exactly one-hot");
                ones += (v == 1.0);
                sum += v;
            }
            if (kind_ == MaskKind::GroundTruth) {
                if (ones != 1 || sum != 1.0) throw ContractError("MaskTensor: ground-truth pixel is not one-hot");
            } else {
                if (std::abs(sum - 1.0) > 1e-5) throw ContractError("MaskTensor: predicted pixel probabilities must sum to 1");
            }
        }
}

int MaskTensor::label_at(int y, int x) const {
    int best = 0;
    double bv = t_.at(y, x, 0);
    for (int k = 1; k < t_.channels(); ++k) {
        double v = t_.at(y, x, k);
        if (v > bv) {
            bv = v;
            best = k;
        }
    }
    return best;
}

MaskTensor MaskTensor::argmax_onehot() const {
    Tensor t(t_.height(), t_.width(), t_.channels());
    for (int y = 0; y < t_.height(); ++y)
        for (int x = 0; x < t_.width(); ++x) t.at(y, x, label_at(y, x)) = 1.0;
    return MaskTensor(std::move(t), MaskKind::GroundTruth);
}

}  // namespace sfea
