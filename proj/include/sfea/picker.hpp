#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfea/image.hpp"
#include "sfea/nn.hpp"

namespace sfea {

// Shared scorer shape for both picker gates: a stack of conv/silu/pool stages,
// global mean pooling, and a conv head applied to the pooled 1x1 feature map
// (only the center tap sees data, so it acts as a linear head). score() crops
// the bottom/right remainder so any input at least 2^stages wide works.
struct SmallCnn {
    int in_ch = 0, base_channels = 0, stages = 0;
    std::vector<ConvLayer> layers;  // `stages` body convs, then the head

    static SmallCnn init(int in_ch, int base_channels, int stages, std::uint64_t seed);
    double score(const Tensor& in) const;
    std::uint64_t digest() const;
};

// Gate 1: is the enhanced image high quality?
struct QualityAssessor {
    SmallCnn net;
    double tau_q = 0.5;

    double score(const ImageTensor& x) const;
};

// Gate 2: does the predicted mask look like a plausible structure map?
// Predicted masks are argmax re-one-hotted before scoring so inference inputs
// match the one-hot distribution the detector was trained on. The generator
// used during training is not part of this frozen artifact.
struct StructureDetector {
    SmallCnn net;
    double tau_s = 0.5;

    double score(const MaskTensor& m) const;
};

struct Picker {
    QualityAssessor iqa;
    StructureDetector isd;

    std::uint64_t digest() const;  // covers both nets and both thresholds
};

struct PickVerdict {
    double quality_score = 0.0;
    double structure_score = 0.0;
    bool picked = false;
};

struct IqaTrainConfig {
    int base_channels = 8;
    int stages = 3;
    int epochs = 30;
    int batch_size = 8;
    double lr = 1e-3;
    double tau_q = 0.5;
    AdamConfig adam;
    std::uint64_t seed = 0;
};

struct IsdTrainConfig {
    int base_channels = 8;
    int stages = 3;
    int latent_dim = 64;
    int decoder_channels = 16;
    int epochs = 25;
    int batch_size = 8;
    double lr = 1e-3;
    double beta_kl = 1e-3;      // weight of the KL term in the generator loss
    double adv_weight = 0.1;    // weight of the fool-the-detector term
    double tau_s = 0.5;
    AdamConfig adam;
    std::uint64_t seed = 0;
};

// Binary cross-entropy training of the quality gate. Requires both labels to
// be present (single-class data cannot define the decision boundary).
QualityAssessor train_iqa(const std::vector<std::pair<ImageTensor, int>>& labeled,
                          const IqaTrainConfig& cfg);

// Adversarial training of the structure gate: a convolutional VAE generates
// candidate masks from latent samples; the detector learns to tell real
// one-hot masks from re-one-hotted generated ones. Only the detector is
// returned. Masks must share one shape with a power-of-two square side.
// Fewer than 8 masks is rejected as degenerate.
StructureDetector train_isd(const std::vector<MaskTensor>& masks, const IsdTrainConfig& cfg);

// Pure AND gate: picked iff quality_score >= tau_q and structure_score >= tau_s.
PickVerdict pick(const Picker& picker, const ImageTensor& y_alpha, const MaskTensor& m_alpha);

// Picker checkpoints: binary blob + JSON sidecar, same layout family as the
// enhancer checkpoints.
void save_picker(const Picker& picker, const std::string& path, std::uint64_t seed);
Picker load_picker(const std::string& path);

}  // namespace sfea
