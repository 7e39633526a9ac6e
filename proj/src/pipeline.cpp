#include "sfea/pipeline.hpp"

#include <ostream>
#include <utility>

#include "sfea/degrade.hpp"

namespace sfea {
namespace {

// Distinct deterministic seeds per stage so no two stages share a stream.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stream) {
    return Rng::forked(seed, stream).next_u64();
}

constexpr std::uint64_t kCorpusStream = 10;
constexpr std::uint64_t kSourceSynthStream = 11;
constexpr std::uint64_t kTrainStream = 12;
constexpr std::uint64_t kIqaDataStream = 13;
constexpr std::uint64_t kIqaTrainStream = 14;
constexpr std::uint64_t kIsdTrainStream = 15;
constexpr std::uint64_t kTargetCorpusStream = 16;
constexpr std::uint64_t kTargetSynthStream = 17;
constexpr std::uint64_t kAdaptStream = 18;

void note(std::ostream* progress, const std::string& line) {
    if (progress) *progress << line << "\n" << std::flush;
}

DegradationSet family_from_json(const nlohmann::json& value) {
    if (value.is_string()) return family_from_name(value.get<std::string>());
    return value.get<DegradationSet>();
}

template <typename T>
void set_num(T& field, const nlohmann::json& value) {
    field = value.get<T>();
}

}  // namespace

std::string family_name(DegradationSet set) {
    if (set == kInterferenceFamily) return "interference";
    if (set == kCataractFamily) return "cataract";
    if (set == kAllDegradations) return "all";
    return std::to_string(set);
}

DegradationSet family_from_name(const std::string& name) {
    if (name == "interference") return kInterferenceFamily;
    if (name == "cataract") return kCataractFamily;
    if (name == "all") return kAllDegradations;
    throw ContractError("unknown degradation family: " + name);
}

std::vector<std::pair<ImageTensor, int>> make_quality_training_set(
    const std::vector<ImageTensor>& clean, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<ImageTensor, int>> labeled;
    labeled.reserve(clean.size() * 2);
    for (const auto& img : clean) {
        labeled.emplace_back(img, 1);
        labeled.emplace_back(degrade_one(img, sample_params(kAllDegradations, rng)), 0);
    }
    return labeled;
}

PipelinePreset desk_preset() {
    PipelinePreset p;
    p.name = "desk-scale";
    p.clean_count = 32;
    p.image_size = 64;
    p.per_image = 16;
    p.target_count = 32;
    p.target_per_image = 1;

    p.train.depth = 2;
    p.train.base_channels = 16;
    p.train.num_classes = 2;
    p.train.crop_size = 64;
    p.train.scale_set = {72, 80, 88, 96};
    p.train.batch_size = 8;
    p.train.epochs_flat = 5;
    p.train.epochs_decay = 2;
    p.train.lr0 = 1e-3;
    p.train.lambda_s = 0.3;

    p.iqa.base_channels = 8;
    p.iqa.stages = 3;
    p.iqa.epochs = 15;
    p.iqa.batch_size = 8;

    p.isd.base_channels = 8;
    p.isd.stages = 3;
    p.isd.latent_dim = 64;
    p.isd.decoder_channels = 16;
    p.isd.epochs = 12;
    p.isd.batch_size = 8;

    p.adapt.epochs = 20;
    p.adapt.batch_size = 8;
    p.adapt.lr0 = 1e-3;
    // Scaled down from the full-run 0.999 in step-count proportion: slow enough
    // that the teacher averages over many student steps, fast enough to move at
    // all within this preset's ~80 adaptation steps.
    p.adapt.ema_decay = 0.99;
    p.adapt.lambda_ce = 0.3;
    return p;
}

PipelinePreset paper_preset() {
    PipelinePreset p;
    p.name = "paper-scale";
    p.clean_count = 128;
    p.image_size = 256;
    p.per_image = 16;
    p.target_count = 100;
    p.target_per_image = 1;

    p.train.depth = 5;
    p.train.base_channels = 64;
    p.train.num_classes = 2;
    p.train.crop_size = 256;
    p.train.scale_set = {286, 306, 326, 346};
    p.train.batch_size = 8;
    p.train.epochs_flat = 150;
    p.train.epochs_decay = 50;
    p.train.lr0 = 1e-3;
    p.train.lambda_s = 0.3;

    p.iqa.epochs = 30;
    p.isd.epochs = 25;

    p.adapt.epochs = 200;
    p.adapt.batch_size = 8;
    p.adapt.lr0 = 1e-3;
    p.adapt.ema_decay = 0.999;
    p.adapt.lambda_ce = 0.3;
    return p;
}

PipelinePreset preset_by_name(const std::string& name) {
    if (name == "desk-scale") return desk_preset();
    if (name == "paper-scale") return paper_preset();
    throw ContractError("unknown preset: " + name + " (expected desk-scale or paper-scale)");
}

void apply_override(PipelinePreset& preset, const std::string& key, const nlohmann::json& value) {
    if (key == "corpus.clean_count") return set_num(preset.clean_count, value);
    if (key == "corpus.image_size") return set_num(preset.image_size, value);
    if (key == "corpus.per_image") return set_num(preset.per_image, value);
    if (key == "corpus.source_family") { preset.source_family = family_from_json(value); return; }
    if (key == "target.count") return set_num(preset.target_count, value);
    if (key == "target.per_image") return set_num(preset.target_per_image, value);
    if (key == "target.family") { preset.target_family = family_from_json(value); return; }

    if (key == "train.depth") return set_num(preset.train.depth, value);
    if (key == "train.base_channels") return set_num(preset.train.base_channels, value);
    if (key == "train.num_classes") return set_num(preset.train.num_classes, value);
    if (key == "train.crop_size") return set_num(preset.train.crop_size, value);
    if (key == "train.scale_set") { preset.train.scale_set = value.get<std::vector<int>>(); return; }
    if (key == "train.batch_size") return set_num(preset.train.batch_size, value);
    if (key == "train.epochs_flat") return set_num(preset.train.epochs_flat, value);
    if (key == "train.epochs_decay") return set_num(preset.train.epochs_decay, value);
    if (key == "train.lr0") return set_num(preset.train.lr0, value);
    if (key == "train.lambda_s") return set_num(preset.train.lambda_s, value);

    if (key == "picker.iqa_base_channels") return set_num(preset.iqa.base_channels, value);
    if (key == "picker.iqa_stages") return set_num(preset.iqa.stages, value);
    if (key == "picker.iqa_epochs") return set_num(preset.iqa.epochs, value);
    if (key == "picker.iqa_lr") return set_num(preset.iqa.lr, value);
    if (key == "picker.tau_q") return set_num(preset.iqa.tau_q, value);
    if (key == "picker.isd_base_channels") return set_num(preset.isd.base_channels, value);
    if (key == "picker.isd_stages") return set_num(preset.isd.stages, value);
    if (key == "picker.isd_latent_dim") return set_num(preset.isd.latent_dim, value);
    if (key == "picker.isd_decoder_channels") return set_num(preset.isd.decoder_channels, value);
    if (key == "picker.isd_epochs") return set_num(preset.isd.epochs, value);
    if (key == "picker.isd_lr") return set_num(preset.isd.lr, value);
    if (key == "picker.isd_beta_kl") return set_num(preset.isd.beta_kl, value);
    if (key == "picker.isd_adv_weight") return set_num(preset.isd.adv_weight, value);
    if (key == "picker.tau_s") return set_num(preset.isd.tau_s, value);

    if (key == "adapt.epochs") return set_num(preset.adapt.epochs, value);
    if (key == "adapt.batch_size") return set_num(preset.adapt.batch_size, value);
    if (key == "adapt.lr0") return set_num(preset.adapt.lr0, value);
    if (key == "adapt.ema_decay") return set_num(preset.adapt.ema_decay, value);
    if (key == "adapt.lambda_ce") return set_num(preset.adapt.lambda_ce, value);
    if (key == "adapt.accept_all") return set_num(preset.adapt.accept_all, value);
    if (key == "adapt.brightness_delta") return set_num(preset.adapt.perturb.brightness_delta, value);
    if (key == "adapt.contrast_range") return set_num(preset.adapt.perturb.contrast_range, value);
    if (key == "adapt.color_jitter") return set_num(preset.adapt.perturb.color_jitter, value);

    throw ContractError("unknown config key: " + key);
}

void apply_overrides(PipelinePreset& preset, const nlohmann::json& object) {
    if (!object.is_object()) throw ContractError("config overrides must be a JSON object");
    for (const auto& [key, value] : object.items()) apply_override(preset, key, value);
}

nlohmann::json preset_to_json(const PipelinePreset& p) {
    return nlohmann::json{
        {"preset", p.name},
        {"corpus.clean_count", p.clean_count},
        {"corpus.image_size", p.image_size},
        {"corpus.per_image", p.per_image},
        {"corpus.source_family", family_name(p.source_family)},
        {"target.count", p.target_count},
        {"target.per_image", p.target_per_image},
        {"target.family", family_name(p.target_family)},
        {"train.depth", p.train.depth},
        {"train.base_channels", p.train.base_channels},
        {"train.num_classes", p.train.num_classes},
        {"train.crop_size", p.train.crop_size},
        {"train.scale_set", p.train.scale_set},
        {"train.batch_size", p.train.batch_size},
        {"train.epochs_flat", p.train.epochs_flat},
        {"train.epochs_decay", p.train.epochs_decay},
        {"train.lr0", p.train.lr0},
        {"train.lambda_s", p.train.lambda_s},
        {"picker.iqa_base_channels", p.iqa.base_channels},
        {"picker.iqa_stages", p.iqa.stages},
        {"picker.iqa_epochs", p.iqa.epochs},
        {"picker.iqa_lr", p.iqa.lr},
        {"picker.tau_q", p.iqa.tau_q},
        {"picker.isd_base_channels", p.isd.base_channels},
        {"picker.isd_stages", p.isd.stages},
        {"picker.isd_latent_dim", p.isd.latent_dim},
        {"picker.isd_decoder_channels", p.isd.decoder_channels},
        {"picker.isd_epochs", p.isd.epochs},
        {"picker.isd_lr", p.isd.lr},
        {"picker.isd_beta_kl", p.isd.beta_kl},
        {"picker.isd_adv_weight", p.isd.adv_weight},
        {"picker.tau_s", p.isd.tau_s},
        {"adapt.epochs", p.adapt.epochs},
        {"adapt.batch_size", p.adapt.batch_size},
        {"adapt.lr0", p.adapt.lr0},
        {"adapt.ema_decay", p.adapt.ema_decay},
        {"adapt.lambda_ce", p.adapt.lambda_ce},
        {"adapt.accept_all", p.adapt.accept_all},
        {"adapt.brightness_delta", p.adapt.perturb.brightness_delta},
        {"adapt.contrast_range", p.adapt.perturb.contrast_range},
        {"adapt.color_jitter", p.adapt.perturb.color_jitter},
    };
}

PipelineArtifacts run_source_stage(const PipelinePreset& preset, std::uint64_t seed,
                                   std::ostream* progress) {
    PipelineArtifacts art;

    note(progress, "[corpus] drawing " + std::to_string(preset.clean_count) + " clean images");
    auto clean = make_toy_corpus(preset.clean_count, preset.image_size, stage_seed(seed, kCorpusStream));

    note(progress, "[synth] source domain: " + family_name(preset.source_family) + " x" +
                       std::to_string(preset.per_image) + " per image");
    auto samples = synthesize_dataset(clean, preset.per_image, preset.source_family,
                                      stage_seed(seed, kSourceSynthStream));

    note(progress, "[train-source] " + std::to_string(samples.size()) + " pairs, " +
                       std::to_string(preset.train.epochs_flat + preset.train.epochs_decay) + " epochs");
    TrainConfig tc = preset.train;
    tc.seed = stage_seed(seed, kTrainStream);
    TrainResult trained = train_source(samples, tc);
    art.source_model = std::move(trained.model);
    art.train_log = std::move(trained.log);
    if (progress && !art.train_log.empty())
        note(progress, "[train-source] final mean loss " + std::to_string(art.train_log.back().mean_loss));

    note(progress, "[train-picker] quality gate on clean vs heavily degraded");
    std::vector<ImageTensor> clean_images;
    clean_images.reserve(clean.size());
    for (const auto& [img, mask] : clean) clean_images.push_back(img);
    auto labeled = make_quality_training_set(clean_images, stage_seed(seed, kIqaDataStream));
    IqaTrainConfig iqa_cfg = preset.iqa;
    iqa_cfg.seed = stage_seed(seed, kIqaTrainStream);
    art.picker.iqa = train_iqa(labeled, iqa_cfg);

    note(progress, "[train-picker] structure gate on ground-truth masks");
    std::vector<MaskTensor> masks;
    masks.reserve(clean.size());
    for (const auto& [img, mask] : clean) masks.push_back(mask);
    IsdTrainConfig isd_cfg = preset.isd;
    isd_cfg.seed = stage_seed(seed, kIsdTrainStream);
    art.picker.isd = train_isd(masks, isd_cfg);

    note(progress, "[synth] target domain: " + family_name(preset.target_family) +
                       ", references withheld");
    auto target_clean = make_toy_corpus(preset.target_count, preset.image_size,
                                        stage_seed(seed, kTargetCorpusStream));
    art.target_samples = synthesize_dataset(target_clean, preset.target_per_image,
                                            preset.target_family, stage_seed(seed, kTargetSynthStream));
    return art;
}

TrainResult run_adapt_stage(const PipelineArtifacts& artifacts, const PipelinePreset& preset,
                            std::uint64_t seed, std::ostream* progress) {
    std::vector<ImageTensor> targets;
    targets.reserve(artifacts.target_samples.size());
    for (const auto& s : artifacts.target_samples) targets.push_back(s.x);

    note(progress, "[adapt] " + std::to_string(targets.size()) + " targets, " +
                       std::to_string(preset.adapt.epochs) + " epochs" +
                       (preset.adapt.accept_all ? ", picker bypassed" : ""));
    AdaptConfig ac = preset.adapt;
    ac.seed = stage_seed(seed, kAdaptStream);
    TrainResult result = adapt(artifacts.source_model, targets, artifacts.picker, ac);
    if (progress && !result.log.empty()) {
        const auto& last = result.log.back();
        note(progress, "[adapt] final proxy size " + std::to_string(last.proxy_size) +
                           ", mean student loss " + std::to_string(last.mean_loss));
    }
    return result;
}

ReproduceReport evaluate_reproduction(const PipelineArtifacts& artifacts,
                                      const EnhancerModel& adapted,
                                      std::vector<EpochLog> adapt_log) {
    ReproduceReport report;
    report.source = evaluate_source(artifacts.source_model, artifacts.target_samples);
    report.adapted = evaluate_source(adapted, artifacts.target_samples);
    report.adapt_log = std::move(adapt_log);

    std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
    pairs.reserve(artifacts.target_samples.size());
    for (const auto& s : artifacts.target_samples) pairs.emplace_back(s.x, s.y);
    report.deltas = adapt_report(artifacts.source_model, adapted, pairs);
    return report;
}

ReproduceReport run_reproduce(const PipelinePreset& preset, std::uint64_t seed,
                              std::ostream* progress) {
    PipelineArtifacts art = run_source_stage(preset, seed, progress);
    TrainResult adapted = run_adapt_stage(art, preset, seed, progress);
    note(progress, "[eval] scoring both models on the withheld references");
    return evaluate_reproduction(art, adapted.model, std::move(adapted.log));
}

nlohmann::json report_to_json(const ReproduceReport& report) {
    auto row = [](const char* which, const MetricReport& m) {
        return nlohmann::json{{"model", which},   {"ssim", m.ssim},
                              {"psnr", m.psnr},   {"dice", m.dice_mean},
                              {"iou", m.iou_mean}, {"n", m.n_samples}};
    };
    return nlohmann::json{
        {"rows", nlohmann::json::array({row("source", report.source), row("adapted", report.adapted)})},
        {"per_target",
         {{"improved", report.deltas.improved},
          {"unchanged", report.deltas.unchanged},
          {"regressed", report.deltas.regressed}}},
    };
}

}  // namespace sfea
