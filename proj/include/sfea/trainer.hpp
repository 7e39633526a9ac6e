#pragma once

#include <functional>
#include <vector>

#include "sfea/degrade.hpp"
#include "sfea/enhancer.hpp"
#include "sfea/metrics.hpp"

namespace sfea {

struct TrainConfig {
    // Model
    int depth = 5;
    int base_channels = 64;
    int num_classes = 2;
    // Augmentation: resize to a random square scale, crop, maybe flip.
    int crop_size = 256;
    std::vector<int> scale_set{286, 306, 326, 346};
    // Optimization
    int batch_size = 8;
    int epochs_flat = 150;   // constant-lr epochs
    int epochs_decay = 50;   // linear decay to zero afterwards
    double lr0 = 0.001;
    double lambda_s = 0.3;   // structure-loss weight
    AdamConfig adam;
    std::uint64_t seed = 0;

    void validate() const;
};

// lr0 while epoch < epochs_flat, then linear decay hitting 0 at
// epochs_flat + epochs_decay.
double lr_schedule(const TrainConfig& cfg, int epoch);

int draw_scale(const TrainConfig& cfg, Rng& rng);

// One shared geometric transform applied to the triple: common scale from the
// scale set (bilinear for images, nearest for the mask), one shared crop
// offset, one shared optional horizontal flip.
struct AugmentedSample {
    ImageTensor x;
    ImageTensor y;
    MaskTensor m;
};
AugmentedSample augment(const ImageTensor& x, const ImageTensor& y, const MaskTensor& m,
                        const TrainConfig& cfg, Rng& rng);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double wall_time_s = 0.0;
    int proxy_size = 0;        // used by adaptation logs; 0 for source training
    bool proxy_reused = false; // true when a refresh came back empty
};

struct TrainResult {
    EnhancerModel model;
    std::vector<EpochLog> log;
};

// Supervised training on degraded/clean/mask triples. Aborts with a
// NumericError naming epoch and batch if the loss goes non-finite.
TrainResult train_source(const std::vector<SourceSample>& samples, const TrainConfig& cfg);

// Mean SSIM/PSNR of enhanced-vs-reference and DICE/IoU of mask-vs-reference.
MetricReport evaluate_source(const EnhancerModel& model, const std::vector<SourceSample>& heldout);

// Same aggregation driven by an arbitrary enhance function (used by tests and
// by before/after comparisons).
MetricReport evaluate_outputs(const std::function<EnhanceOutput(const ImageTensor&)>& fn,
                              const std::vector<SourceSample>& heldout);

}  // namespace sfea
