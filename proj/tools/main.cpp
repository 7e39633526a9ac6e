#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfea/checkpoint.hpp"
#include "sfea/degrade.hpp"
#include "sfea/metrics.hpp"
#include "sfea/pipeline.hpp"
#include "sfea/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sfea;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::string preset = "desk-scale";
    std::string config_path;
    std::string log_level = "info";

    bool quiet() const { return log_level == "quiet"; }
    bool debug() const { return log_level == "debug"; }
    std::ostream* progress() const { return quiet() ? nullptr : &std::cerr; }
};

// Preset resolution happens before any work so bad override keys fail fast.
PipelinePreset resolve_preset(const GlobalOpts& g) {
    PipelinePreset p = preset_by_name(g.preset);
    if (!g.config_path.empty()) {
        std::ifstream f(g.config_path);
        if (!f) throw DataError("cannot open config file: " + g.config_path);
        json overrides;
        try {
            overrides = json::parse(f);
        } catch (const json::exception& e) {
            throw DataError("config file " + g.config_path + " is not valid JSON: " + e.what());
        }
        apply_overrides(p, overrides);
    }
    return p;
}

void write_snapshot(const PipelinePreset& p, const GlobalOpts& g, const std::string& command,
                    const fs::path& path) {
    json j = preset_to_json(p);
    j["command"] = command;
    j["seed"] = g.seed;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write config snapshot: " + path.string());
    f << j.dump(2) << "\n";
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write: " + path.string());
    for (const auto& r : rows) f << r.dump() << "\n";
}

std::vector<fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

// PSNR is +infinity for identical images; JSON numbers cannot carry that, so
// non-finite metrics travel as the string "inf".
json json_metric(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

json source_log_row(const EpochLog& e) {
    return json{{"epoch", e.epoch}, {"lr", e.lr}, {"mean_loss", e.mean_loss},
                {"wall_time", e.wall_time_s}};
}

json adapt_log_row(const EpochLog& e) {
    return json{{"epoch", e.epoch}, {"proxy_size", e.proxy_size},
                {"mean_student_loss", e.mean_loss}, {"lr", e.lr}};
}

void echo_rows(const GlobalOpts& g, const std::vector<json>& rows) {
    if (!g.debug()) return;
    for (const auto& r : rows) std::cerr << r.dump() << "\n";
}

// Loads matching clean/mask pairs; masks must mirror the clean filenames.
std::vector<std::pair<ImageTensor, MaskTensor>> load_clean_pairs(const std::string& clean_dir,
                                                                 const std::string& mask_dir,
                                                                 int num_classes,
                                                                 std::vector<fs::path>* paths_out) {
    auto clean_paths = list_pngs(clean_dir);
    if (clean_paths.empty()) throw DataError("no inputs: no PNG files in " + clean_dir);
    std::vector<std::pair<ImageTensor, MaskTensor>> pairs;
    pairs.reserve(clean_paths.size());
    for (const auto& cp : clean_paths) {
        fs::path mp = fs::path(mask_dir) / cp.filename();
        if (!fs::exists(mp))
            throw DataError("missing mask for " + cp.filename().string() + " in " + mask_dir);
        pairs.emplace_back(read_image_png(cp.string()), read_mask_png(mp.string(), num_classes));
    }
    if (paths_out) *paths_out = std::move(clean_paths);
    return pairs;
}

int cmd_synth(const GlobalOpts& g, const std::string& clean_dir, const std::string& mask_dir,
              const std::string& out_dir, int per_image, const std::string& family) {
    PipelinePreset p = resolve_preset(g);
    if (per_image > 0) p.per_image = per_image;
    if (!family.empty()) p.source_family = family_from_name(family);

    std::vector<fs::path> clean_paths;
    auto clean = load_clean_pairs(clean_dir, mask_dir, p.train.num_classes, &clean_paths);
    auto samples = synthesize_dataset(clean, p.per_image, p.source_family, g.seed);

    fs::create_directories(fs::path(out_dir) / "x");
    fs::create_directories(fs::path(out_dir) / "y");
    fs::create_directories(fs::path(out_dir) / "m");
    std::vector<json> params_rows;
    params_rows.reserve(samples.size());
    for (std::size_t i = 0; i < clean_paths.size(); ++i) {
        for (int j = 0; j < p.per_image; ++j) {
            const auto& s = samples[i * p.per_image + j];
            std::string name = clean_paths[i].stem().string() + "_" +
                               (j < 10 ? "0" : "") + std::to_string(j) + ".png";
            write_image_png(s.x, (fs::path(out_dir) / "x" / name).string());
            write_image_png(s.y, (fs::path(out_dir) / "y" / name).string());
            write_mask_png(s.m, (fs::path(out_dir) / "m" / name).string());
            params_rows.push_back(json{{"sample", name},
                                       {"clean", clean_paths[i].filename().string()},
                                       {"blur_sigma", s.params.blur_sigma},
                                       {"illum_gain", s.params.illum_gain},
                                       {"illum_offset", s.params.illum_offset},
                                       {"artifact_count", s.params.artifact_count},
                                       {"haze_alpha", s.params.haze_alpha},
                                       {"haze_color", s.params.haze_color},
                                       {"speckle_var", s.params.speckle_var},
                                       {"rng_seed", s.params.rng_seed}});
        }
    }
    write_jsonl(fs::path(out_dir) / "params.jsonl", params_rows);

    json manifest{{"num_classes", p.train.num_classes},
                  {"count", samples.size()},
                  {"per_image", p.per_image},
                  {"family", family_name(p.source_family)},
                  {"seed", g.seed}};
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    write_snapshot(p, g, "synth", fs::path(out_dir) / "resolved-config.json");
    if (auto* os = g.progress())
        *os << "[synth] wrote " << samples.size() << " triples to " << out_dir << "\n";
    return 0;
}

int cmd_train_source(const GlobalOpts& g, const std::string& data_dir, const std::string& out,
                     const std::string& log_path) {
    PipelinePreset p = resolve_preset(g);

    fs::path dd(data_dir);
    std::ifstream mf(dd / "manifest.json");
    if (!mf)
        throw DataError("missing manifest.json in " + data_dir + " (expected a synth output directory)");
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        throw DataError("manifest.json in " + data_dir + " is not valid JSON: " + e.what());
    }
    if (!manifest.contains("num_classes") || !manifest["num_classes"].is_number_integer())
        throw DataError("manifest.json in " + data_dir + " lacks an integer num_classes");
    const int num_classes = manifest["num_classes"].get<int>();

    auto x_paths = list_pngs((dd / "x").string());
    if (x_paths.empty()) throw DataError("no inputs: no PNG files in " + (dd / "x").string());
    std::vector<SourceSample> samples;
    samples.reserve(x_paths.size());
    for (const auto& xp : x_paths) {
        fs::path yp = dd / "y" / xp.filename();
        fs::path mp = dd / "m" / xp.filename();
        if (!fs::exists(yp) || !fs::exists(mp))
            throw DataError("incomplete triple for " + xp.filename().string());
        samples.push_back({read_image_png(xp.string()), read_image_png(yp.string()),
                           read_mask_png(mp.string(), num_classes), {}});
    }

    TrainConfig tc = p.train;
    tc.num_classes = num_classes;
    tc.seed = g.seed;
    if (auto* os = g.progress())
        *os << "[train-source] " << samples.size() << " pairs, "
            << tc.epochs_flat + tc.epochs_decay << " epochs\n";
    TrainResult r = train_source(samples, tc);

    save_enhancer(r.model, {1, "source", g.seed, tc.epochs_flat + tc.epochs_decay}, out);
    std::vector<json> rows;
    rows.reserve(r.log.size());
    for (const auto& e : r.log) rows.push_back(source_log_row(e));
    if (!log_path.empty()) write_jsonl(log_path, rows);
    echo_rows(g, rows);
    write_snapshot(p, g, "train-source", out + ".config.json");
    if (auto* os = g.progress())
        *os << "[train-source] saved " << out << ", final mean loss "
            << (r.log.empty() ? 0.0 : r.log.back().mean_loss) << "\n";
    return 0;
}

int cmd_train_picker(const GlobalOpts& g, const std::string& clean_dir,
                     const std::string& mask_dir, const std::string& out) {
    PipelinePreset p = resolve_preset(g);
    auto pairs = load_clean_pairs(clean_dir, mask_dir, p.train.num_classes, nullptr);

    std::vector<ImageTensor> clean;
    std::vector<MaskTensor> masks;
    clean.reserve(pairs.size());
    masks.reserve(pairs.size());
    for (auto& [img, mask] : pairs) {
        clean.push_back(std::move(img));
        masks.push_back(std::move(mask));
    }

    if (auto* os = g.progress())
        *os << "[train-picker] quality gate on " << clean.size() << " clean images\n";
    IqaTrainConfig ic = p.iqa;
    ic.seed = Rng::forked(g.seed, 2).next_u64();
    Picker picker;
    picker.iqa = train_iqa(make_quality_training_set(clean, Rng::forked(g.seed, 1).next_u64()), ic);

    if (auto* os = g.progress())
        *os << "[train-picker] structure gate on " << masks.size() << " masks\n";
    IsdTrainConfig sc = p.isd;
    sc.seed = Rng::forked(g.seed, 3).next_u64();
    picker.isd = train_isd(masks, sc);

    save_picker(picker, out, g.seed);
    write_snapshot(p, g, "train-picker", out + ".config.json");
    if (auto* os = g.progress()) *os << "[train-picker] saved " << out << "\n";
    return 0;
}

int cmd_adapt(const GlobalOpts& g, const std::string& source_path, const std::string& picker_path,
              const std::string& target_dir, const std::string& out, const AdaptConfig& overrides,
              const std::string& log_path) {
    PipelinePreset p = resolve_preset(g);
    EnhancerModel source = load_enhancer(source_path);
    Picker picker = load_picker(picker_path);

    auto t_paths = list_pngs(target_dir);
    if (t_paths.empty()) throw DataError("no inputs: no PNG files in " + target_dir);
    std::vector<ImageTensor> targets;
    targets.reserve(t_paths.size());
    for (const auto& tp : t_paths) targets.push_back(read_image_png(tp.string()));

    AdaptConfig ac = overrides;
    ac.seed = g.seed;
    if (auto* os = g.progress())
        *os << "[adapt] " << targets.size() << " targets, " << ac.epochs << " epochs"
            << (ac.accept_all ? ", picker bypassed" : "") << "\n";
    TrainResult r = adapt(source, targets, picker, ac);

    save_enhancer(r.model, {1, "adapted", g.seed, ac.epochs}, out);
    std::vector<json> rows;
    rows.reserve(r.log.size());
    for (const auto& e : r.log) rows.push_back(adapt_log_row(e));
    if (!log_path.empty()) write_jsonl(log_path, rows);
    echo_rows(g, rows);
    write_snapshot(p, g, "adapt", out + ".config.json");
    if (auto* os = g.progress())
        *os << "[adapt] saved " << out << ", final proxy size "
            << (r.log.empty() ? 0 : r.log.back().proxy_size) << "\n";
    return 0;
}

int cmd_enhance(const GlobalOpts& g, const std::string& model_path, const std::string& in_dir,
                const std::string& out_dir, bool masks) {
    PipelinePreset p = resolve_preset(g);
    EnhancerModel model = load_enhancer(model_path);

    auto inputs = list_pngs(in_dir);
    if (inputs.empty()) throw DataError("no inputs: no PNG files in " + in_dir);

    fs::create_directories(out_dir);
    if (masks) fs::create_directories(fs::path(out_dir) / "masks");
    int ok = 0;
    for (const auto& ip : inputs) {
        std::optional<ImageTensor> img;
        try {
            img.emplace(read_image_png(ip.string()));
        } catch (const DataError& e) {
            std::cerr << "warning: skipping " << ip.string() << ": " << e.what() << "\n";
            continue;
        }
        EnhanceOutput res = forward(model, *img);
        write_image_png(res.enhanced, (fs::path(out_dir) / ip.filename()).string());
        if (masks) write_mask_png(res.mask_pred, (fs::path(out_dir) / "masks" / ip.filename()).string());
        ++ok;
    }
    write_snapshot(p, g, "enhance", fs::path(out_dir) / "resolved-config.json");
    if (ok == 0) throw DataError("all " + std::to_string(inputs.size()) + " inputs failed to read");
    if (auto* os = g.progress())
        *os << "[enhance] wrote " << ok << "/" << inputs.size() << " outputs to " << out_dir << "\n";
    return 0;
}

// The two filename sets must match exactly; the error spells out the gap.
void require_same_names(const std::vector<fs::path>& a, const std::vector<fs::path>& b,
                        const std::string& dir_a, const std::string& dir_b) {
    std::vector<std::string> na, nb;
    for (const auto& x : a) na.push_back(x.filename().string());
    for (const auto& x : b) nb.push_back(x.filename().string());
    if (na == nb) return;
    std::vector<std::string> only_a, only_b;
    std::set_difference(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(only_a));
    std::set_difference(nb.begin(), nb.end(), na.begin(), na.end(), std::back_inserter(only_b));
    auto head = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size() && i < 8; ++i) s += (i ? ", " : "") + v[i];
        if (v.size() > 8) s += ", ...";
        return s.empty() ? std::string("(none)") : s;
    };
    throw DataError("filename sets differ; only in " + dir_a + ": " + head(only_a) +
                    "; only in " + dir_b + ": " + head(only_b));
}

int cmd_eval(const GlobalOpts& g, const std::string& dir_a, const std::string& dir_b,
             const std::string& mask_dir_a, const std::string& mask_dir_b,
             const std::string& out_table) {
    PipelinePreset p = resolve_preset(g);
    if (mask_dir_a.empty() != mask_dir_b.empty())
        throw ContractError("--mask-dir-a and --mask-dir-b must be given together");
    const bool with_masks = !mask_dir_a.empty();

    auto a_paths = list_pngs(dir_a);
    auto b_paths = list_pngs(dir_b);
    if (a_paths.empty()) throw DataError("no inputs: no PNG files in " + dir_a);
    require_same_names(a_paths, b_paths, dir_a, dir_b);

    std::vector<json> rows;
    rows.reserve(a_paths.size());
    double sum_ssim = 0.0, sum_psnr = 0.0, sum_dice = 0.0, sum_iou = 0.0;
    for (std::size_t i = 0; i < a_paths.size(); ++i) {
        const std::string name = a_paths[i].filename().string();
        ImageTensor ia = read_image_png(a_paths[i].string());
        ImageTensor ib = read_image_png(b_paths[i].string());
        const double s = ssim(ia, ib);
        const double pr = psnr(ia, ib);
        sum_ssim += s;
        sum_psnr += pr;
        json row{{"file", name}, {"ssim", s}, {"psnr", json_metric(pr)}};
        if (with_masks) {
            fs::path ma = fs::path(mask_dir_a) / name;
            fs::path mb = fs::path(mask_dir_b) / name;
            if (!fs::exists(ma) || !fs::exists(mb)) throw DataError("missing mask for " + name);
            DiceIou di = dice_iou(read_mask_png(ma.string(), p.train.num_classes),
                                  read_mask_png(mb.string(), p.train.num_classes));
            sum_dice += di.mean_dice();
            sum_iou += di.mean_iou();
            row["dice"] = di.mean_dice();
            row["iou"] = di.mean_iou();
        }
        rows.push_back(std::move(row));
    }
    write_jsonl(out_table, rows);

    const double n = static_cast<double>(a_paths.size());
    json mean{{"files", a_paths.size()}, {"ssim", sum_ssim / n}, {"psnr", json_metric(sum_psnr / n)}};
    if (with_masks) {
        mean["dice"] = sum_dice / n;
        mean["iou"] = sum_iou / n;
    }
    std::ofstream sf(out_table + ".summary.json");
    sf << mean.dump(2) << "\n";
    write_snapshot(p, g, "eval", out_table + ".config.json");
    std::cout << mean.dump() << "\n";
    return 0;
}

// Mirrors std::cerr into the run log so failures always leave a trail.
class TeeBuf : public std::streambuf {
  public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

  protected:
    int overflow(int c) override {
        if (c != traits_type::eof()) {
            if (a_) a_->sputc(static_cast<char>(c));
            if (b_) b_->sputc(static_cast<char>(c));
        }
        return c;
    }
    int sync() override {
        if (a_) a_->pubsync();
        if (b_) b_->pubsync();
        return 0;
    }

  private:
    std::streambuf* a_;
    std::streambuf* b_;
};

int cmd_reproduce(const GlobalOpts& g, const std::string& out_dir) {
    PipelinePreset p = resolve_preset(g);
    fs::create_directories(out_dir);
    const fs::path log_path = fs::path(out_dir) / "run.log";
    std::ofstream run_log(log_path);
    if (!run_log) throw DataError("cannot write: " + log_path.string());
    TeeBuf tee(run_log.rdbuf(), g.quiet() ? nullptr : std::cerr.rdbuf());
    std::ostream progress(&tee);
    write_snapshot(p, g, "reproduce", fs::path(out_dir) / "resolved-config.json");

    std::string stage = "setup";
    try {
        stage = "source-training";
        PipelineArtifacts art = run_source_stage(p, g.seed, &progress);
        save_enhancer(art.source_model, {1, "source", g.seed, p.train.epochs_flat + p.train.epochs_decay},
                      (fs::path(out_dir) / "source.ckpt").string());
        save_picker(art.picker, (fs::path(out_dir) / "picker.ckpt").string(), g.seed);
        std::vector<json> train_rows;
        for (const auto& e : art.train_log) train_rows.push_back(source_log_row(e));
        write_jsonl(fs::path(out_dir) / "train.jsonl", train_rows);

        stage = "adaptation";
        TrainResult adapted = run_adapt_stage(art, p, g.seed, &progress);
        save_enhancer(adapted.model, {1, "adapted", g.seed, p.adapt.epochs},
                      (fs::path(out_dir) / "adapted.ckpt").string());
        std::vector<json> adapt_rows;
        for (const auto& e : adapted.log) adapt_rows.push_back(adapt_log_row(e));
        write_jsonl(fs::path(out_dir) / "adapt.jsonl", adapt_rows);

        stage = "evaluation";
        progress << "[eval] scoring both models on the withheld references\n";
        ReproduceReport rep = evaluate_reproduction(art, adapted.model, std::move(adapted.log));

        json report = report_to_json(rep);
        report["seed"] = g.seed;
        report["preset"] = p.name;
        std::ofstream rf(fs::path(out_dir) / "report.json");
        rf << report.dump(2) << "\n";

        for (const auto& row : report["rows"]) std::cout << row.dump() << "\n";
        std::cout << report["per_target"].dump() << "\n";
        progress << "[report] SSIM " << rep.source.ssim << " -> " << rep.adapted.ssim
                 << ", DICE " << rep.source.dice_mean << " -> " << rep.adapted.dice_mean
                 << "; per-target " << rep.deltas.improved << " improved / "
                 << rep.deltas.unchanged << " unchanged / " << rep.deltas.regressed
                 << " regressed\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: stage '" << stage << "' failed (log: " << log_path.string() << ")\n";
        run_log << "stage '" << stage << "' failed: " << e.what() << "\n";
        throw;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structure-preserving image enhancer with source-free domain adaptation"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "master RNG seed")->capture_default_str();
    app.add_option("--preset", g.preset, "experiment scale: desk-scale | paper-scale")
        ->check(CLI::IsMember({"desk-scale", "paper-scale"}))
        ->capture_default_str();
    app.add_option("--config", g.config_path, "JSON file of preset overrides");
    app.add_option("--log-level", g.log_level, "quiet | info | debug")
        ->check(CLI::IsMember({"quiet", "info", "debug"}))
        ->capture_default_str();

    int rc = 0;

    std::string clean_dir, mask_dir, out_dir, family;
    int per_image = 0;
    auto* synth = app.add_subcommand("synth", "synthesize degraded/clean training triples");
    synth->fallthrough();
    synth->add_option("--clean-dir", clean_dir, "directory of clean PNGs")->required();
    synth->add_option("--mask-dir", mask_dir, "directory of mask PNGs (same filenames)")->required();
    synth->add_option("--out-dir", out_dir, "output directory")->required();
    synth->add_option("--per-image", per_image, "degradations per clean image (default: preset)");
    synth->add_option("--family", family, "degradation family: interference | cataract | all");
    synth->callback([&] { rc = cmd_synth(g, clean_dir, mask_dir, out_dir, per_image, family); });

    std::string data_dir, out_path, log_file;
    auto* ts = app.add_subcommand("train-source", "supervised training on synthesized pairs");
    ts->fallthrough();
    ts->add_option("--data-dir", data_dir, "synth output directory")->required();
    ts->add_option("--out", out_path, "checkpoint path")->required();
    ts->add_option("--log", log_file, "JSONL epoch log path");
    ts->callback([&] { rc = cmd_train_source(g, data_dir, out_path, log_file); });

    std::string pk_clean, pk_mask, pk_out;
    auto* tp = app.add_subcommand("train-picker", "train the quality/structure pseudo-label gates");
    tp->fallthrough();
    tp->add_option("--clean-dir", pk_clean, "directory of clean PNGs")->required();
    tp->add_option("--mask-dir", pk_mask, "directory of mask PNGs (same filenames)")->required();
    tp->add_option("--out", pk_out, "picker checkpoint path")->required();
    tp->callback([&] { rc = cmd_train_picker(g, pk_clean, pk_mask, pk_out); });

    std::string ad_source, ad_picker, ad_targets, ad_out, ad_log;
    AdaptConfig ad_cfg;
    auto* ad = app.add_subcommand("adapt", "source-free adaptation on unlabeled targets");
    ad->fallthrough();
    ad->add_option("--source", ad_source, "source checkpoint")->required();
    ad->add_option("--picker", ad_picker, "picker checkpoint")->required();
    ad->add_option("--target-dir", ad_targets, "directory of target PNGs")->required();
    ad->add_option("--out", ad_out, "adapted checkpoint path")->required();
    ad->add_option("--epochs", ad_cfg.epochs, "adaptation epochs");
    ad->add_option("--ema", ad_cfg.ema_decay, "teacher EMA decay");
    ad->add_option("--lambda-ce", ad_cfg.lambda_ce, "structure-loss weight");
    ad->add_flag("--accept-all", ad_cfg.accept_all, "bypass the picker gate");
    ad->add_option("--log", ad_log, "JSONL epoch log path");
    ad->callback([&] {
        PipelinePreset p = resolve_preset(g);
        AdaptConfig ac = p.adapt;
        if (ad->count("--epochs")) ac.epochs = ad_cfg.epochs;
        if (ad->count("--ema")) ac.ema_decay = ad_cfg.ema_decay;
        if (ad->count("--lambda-ce")) ac.lambda_ce = ad_cfg.lambda_ce;
        if (ad->count("--accept-all")) ac.accept_all = ad_cfg.accept_all;
        rc = cmd_adapt(g, ad_source, ad_picker, ad_targets, ad_out, ac, ad_log);
    });

    std::string en_model, en_in, en_out;
    bool en_masks = false;
    auto* en = app.add_subcommand("enhance", "run a checkpoint over a directory of PNGs");
    en->fallthrough();
    en->add_option("--model", en_model, "enhancer checkpoint")->required();
    en->add_option("--in-dir", en_in, "input directory")->required();
    en->add_option("--out-dir", en_out, "output directory")->required();
    en->add_flag("--masks", en_masks, "also write predicted masks as indexed PNG");
    en->callback([&] { rc = cmd_enhance(g, en_model, en_in, en_out, en_masks); });

    std::string ev_a, ev_b, ev_ma, ev_mb, ev_out;
    auto* ev = app.add_subcommand("eval", "image-quality metrics between two directories");
    ev->fallthrough();
    ev->add_option("--dir-a", ev_a, "first directory")->required();
    ev->add_option("--dir-b", ev_b, "second directory (same filenames)")->required();
    ev->add_option("--mask-dir-a", ev_ma, "masks for the first directory");
    ev->add_option("--mask-dir-b", ev_mb, "masks for the second directory");
    ev->add_option("--out", ev_out, "JSONL table path")->required();
    ev->callback([&] { rc = cmd_eval(g, ev_a, ev_b, ev_ma, ev_mb, ev_out); });

    std::string rp_out = "reproduce-out";
    auto* rp = app.add_subcommand("reproduce", "full pipeline on a self-generated toy corpus");
    rp->fallthrough();
    rp->add_option("--out-dir", rp_out, "artifact directory")->capture_default_str();
    rp->callback([&] { rc = cmd_reproduce(g, rp_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return rc;
}
