#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfea/checkpoint.hpp"
#include "sfea/degrade.hpp"
#include "sfea/metrics.hpp"
#include "sfea/sfuda.hpp"

#include <json.hpp>

namespace sfea {

// One self-contained experiment recipe: corpus dimensions, the two synthetic
// domains, and the per-stage training configs.
struct PipelinePreset {
    std::string name;
    int clean_count = 32;
    int image_size = 64;
    int per_image = 16;          // degradations per clean image (source domain)
    int target_count = 32;       // clean references behind the target domain
    int target_per_image = 1;
    DegradationSet source_family = kInterferenceFamily;
    DegradationSet target_family = kCataractFamily;
    TrainConfig train;
    IqaTrainConfig iqa;
    IsdTrainConfig isd;
    AdaptConfig adapt;
};

// Degradation family <-> stable config-file spelling.
std::string family_name(DegradationSet set);
DegradationSet family_from_name(const std::string& name);

// Small-model recipe sized for minutes on a laptop CPU.
PipelinePreset desk_preset();
// Full-scale recipe mirroring the published protocol; hours of compute.
PipelinePreset paper_preset();
PipelinePreset preset_by_name(const std::string& name);

// Applies "section.key" overrides onto a preset; unknown keys are rejected
// before any work starts.
void apply_override(PipelinePreset& preset, const std::string& key, const nlohmann::json& value);
void apply_overrides(PipelinePreset& preset, const nlohmann::json& object);

// Full serialized recipe, written next to run outputs so any run replays.
nlohmann::json preset_to_json(const PipelinePreset& preset);

// Labeled data for the quality gate: each clean image paired once as-is
// (label 1) and once degraded with calibrated-range parameters drawn over
// every degradation stage (label 0). Sampling the whole calibrated band
// instead of only extreme corruptions keeps the decision boundary near the
// kinds of inputs the gate actually scores, so raw scores spread across
// [0,1] rather than saturating at the ends.
std::vector<std::pair<ImageTensor, int>> make_quality_training_set(
    const std::vector<ImageTensor>& clean, std::uint64_t seed);

// Source-side artifacts shared by reproduction and ablation runs.
struct PipelineArtifacts {
    EnhancerModel source_model = EnhancerModel::init(2, 4, 2, 0);
    Picker picker;
    std::vector<SourceSample> target_samples;  // degraded target + withheld refs
    std::vector<EpochLog> train_log;
};

// Toy corpus -> source synthesis -> source training -> picker training ->
// target synthesis. Every stage seeds its own stream off `seed`.
PipelineArtifacts run_source_stage(const PipelinePreset& preset, std::uint64_t seed,
                                   std::ostream* progress = nullptr);

// Adaptation on the artifacts' target inputs (references stay withheld).
TrainResult run_adapt_stage(const PipelineArtifacts& artifacts, const PipelinePreset& preset,
                            std::uint64_t seed, std::ostream* progress = nullptr);

struct ReproduceReport {
    MetricReport source;
    MetricReport adapted;
    AdaptReport deltas;
    std::vector<EpochLog> adapt_log;
};

// Scores source vs adapted on the withheld references and tallies per-target
// SSIM deltas.
ReproduceReport evaluate_reproduction(const PipelineArtifacts& artifacts,
                                      const EnhancerModel& adapted,
                                      std::vector<EpochLog> adapt_log = {});

// The end-to-end experiment: train on one synthetic domain, adapt source-free
// to the other, report both models on the withheld references.
ReproduceReport run_reproduce(const PipelinePreset& preset, std::uint64_t seed,
                              std::ostream* progress = nullptr);

nlohmann::json report_to_json(const ReproduceReport& report);

}  // namespace sfea
