// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sfea/checkpoint.hpp"
#include "sfea/degrade.hpp"
#include "sfea/metrics.hpp"
#include "sfea/pipeline.hpp"
#include "sfea/png_io.hpp"

using namespace sfea;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kLossIdentityTol = 1e-6;   // perfect-one-hot structure loss
constexpr double kFdRelTol = 1e-3;          // gradient check, relative
constexpr double kFdBudgetS = 120.0;        // gradient check wall budget
constexpr double kSsimConstExpected = 9.999e-5;
constexpr double kSsimConstTol = 1e-6;
constexpr double kPsnrExpected = 6.0206;    // 10*log10(4)
constexpr double kPsnrTol = 1e-3;
constexpr double kEmaReplayTol = 1e-6;
constexpr double kSsimGainMin = 0.005;      // adapted must beat source by this
constexpr double kDiceDropMax = 0.01;       // adapted DICE may trail by at most this
constexpr double kReproduceBudgetS = 1800.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

ImageTensor random_image(int h, int w, Rng& r) {
    Tensor t(h, w, 3);
    for (auto& v : t.values()) v = r.uniform();
    return ImageTensor(std::move(t));
}

MaskTensor random_mask(int h, int w, int k, Rng& r) {
    std::vector<int> labels(static_cast<std::size_t>(h) * w);
    for (auto& l : labels) l = r.uniform_int(0, k - 1);
    return MaskTensor::from_labels(h, w, k, labels);
}

double composite_loss(const EnhancerModel& model, const ImageTensor& x, const ImageTensor& y,
                      const MaskTensor& m, double lambda) {
    return loss_source(forward(model, x), y, m, lambda);
}

Outcome c1_loss_identities() {
    Rng r(101);
    ImageTensor a = random_image(20, 20, r);
    const double self_l1 = loss_enhance(a, a);

    MaskTensor onehot = random_mask(20, 20, 2, r);
    MaskTensor onehot_as_probs(Tensor(onehot.tensor()), MaskKind::Predicted);
    const double perfect_ce = loss_structure(onehot_as_probs, onehot);

    EnhancerModel model = EnhancerModel::init(2, 4, 2, 7);
    ImageTensor x = random_image(16, 16, r);
    ImageTensor y = random_image(16, 16, r);
    MaskTensor m = random_mask(16, 16, 2, r);
    EnhanceOutput out = forward(model, x);
    const double lambda0 = loss_source(out, y, m, 0.0);
    const double l1_only = loss_enhance(out.enhanced, y);

    const bool pass = self_l1 == 0.0 && perfect_ce <= kLossIdentityTol && lambda0 == l1_only;
    return {pass, "self L1 = " + fmt(self_l1) + ", perfect one-hot CE = " + fmt(perfect_ce) +
                      ", lambda=0 composite" + (lambda0 == l1_only ? " == " : " != ") + "L1"};
}

Outcome c2_gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    const double lambda = 0.3;
    const double h = 1e-4;
    EnhancerModel model = EnhancerModel::init(2, 4, 2, 123);
    Rng r(14);
    ImageTensor x = random_image(16, 16, r);
    MaskTensor m = random_mask(16, 16, 2, r);

    // Keep the L1 term two-sided differentiable: move reference pixels away
    // from any prediction they could cross inside the difference window.
    Tensor yt(16, 16, 3);
    {
        EnhanceOutput out = forward(model, x);
        for (std::size_t i = 0; i < yt.size(); ++i) {
            const double yhat = out.enhanced.tensor().values()[i];
            double cand = r.uniform();
            if (std::abs(yhat - cand) < 1e-3) cand = yhat > 0.5 ? yhat - 0.1 : yhat + 0.1;
            yt.values()[i] = cand;
        }
    }
    ImageTensor y(std::move(yt));

    Gradients grads;
    grads.init_like(model.layers);
    loss_and_backward(model, x, y, m, lambda, grads);
    std::vector<double> analytic;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        analytic.insert(analytic.end(), grads.dw[li].begin(), grads.dw[li].end());
        analytic.insert(analytic.end(), grads.db[li].begin(), grads.db[li].end());
    }

    std::vector<double> theta = flatten_params(model.layers);
    double max_rel = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double keep = theta[j];
        theta[j] = keep + h;
        set_params(model.layers, theta);
        const double lp = composite_loss(model, x, y, m, lambda);
        theta[j] = keep - h;
        set_params(model.layers, theta);
        const double lm = composite_loss(model, x, y, m, lambda);
        theta[j] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        max_rel = std::max(max_rel, std::abs(fd - analytic[j]) /
                                        std::max({std::abs(fd), std::abs(analytic[j]), 1e-4}));
    }
    set_params(model.layers, theta);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool pass = max_rel < kFdRelTol && secs < kFdBudgetS;
    return {pass, std::to_string(theta.size()) + " parameters, max rel err " + fmt(max_rel) +
                      ", " + fmt(secs) + " s"};
}

Outcome c3_metric_oracles() {
    Rng r(33);
    ImageTensor a = random_image(24, 24, r);
    const double self_ssim = ssim(a, a);

    const double const_ssim =
        ssim(ImageTensor::constant(17, 17, 0.0), ImageTensor::constant(17, 17, 1.0));

    const double half_psnr =
        psnr(ImageTensor::constant(16, 16, 0.25), ImageTensor::constant(16, 16, 0.75));

    // |P| = |R| = 4 one-class pixels with |P intersect R| = 2.
    std::vector<int> pl(16 * 16, 0), rl(16 * 16, 0);
    pl[0] = pl[1] = pl[16] = pl[17] = 1;
    rl[0] = rl[1] = rl[32] = rl[33] = 1;
    DiceIou di = dice_iou(MaskTensor::from_labels(16, 16, 2, pl),
                          MaskTensor::from_labels(16, 16, 2, rl));

    const bool pass = self_ssim == 1.0 && std::abs(const_ssim - kSsimConstExpected) <= kSsimConstTol &&
                      std::abs(half_psnr - kPsnrExpected) <= kPsnrTol && di.dice[1] == 0.5 &&
                      di.iou[1] == 1.0 / 3.0;
    return {pass, "SSIM(A,A) = " + fmt(self_ssim) + ", SSIM(0,1) = " + fmt(const_ssim) +
                      ", PSNR(d=0.5) = " + fmt(half_psnr) + ", DICE = " + fmt(di.dice[1]) +
                      ", IoU = " + fmt(di.iou[1])};
}

Outcome c4_ema_algebra() {
    EnhancerModel teacher = EnhancerModel::init(2, 4, 2, 40);
    EnhancerModel student = EnhancerModel::init(2, 4, 2, 41);

    EnhancerModel frozen = teacher;
    ema_update(frozen, student, 1.0);
    const bool decay1_ok = frozen.digest() == teacher.digest();

    EnhancerModel copied = teacher;
    ema_update(copied, student, 0.0);
    const bool decay0_ok = copied.digest() == student.digest();

    EnhancerModel zeroed = teacher;
    std::vector<double> zeros(flatten_params(zeroed.layers).size(), 0.0);
    set_params(zeroed.layers, zeros);
    ema_update(zeroed, student, 0.999);
    const std::vector<double> got = flatten_params(zeroed.layers);
    const std::vector<double> sflat = flatten_params(student.layers);
    bool single_ok = true;
    for (std::size_t i = 0; i < got.size(); ++i)
        if (got[i] != (1.0 - 0.999) * sflat[i]) single_ok = false;

    // Replay the teacher trajectory from logged student snapshots.
    EnhancerModel source = EnhancerModel::init(2, 4, 2, 42);
    auto corpus = make_toy_corpus(3, 64, 43);
    Rng dr(44);
    std::vector<ImageTensor> targets;
    for (const auto& [img, mask] : corpus)
        targets.push_back(degrade_one(img, sample_params(kCataractFamily, dr)));

    std::vector<std::vector<double>> students, teachers;
    AdaptConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;  // 3 steps
    cfg.ema_decay = 0.9;
    cfg.seed = 45;
    PickFn accept = [](const ImageTensor&, const MaskTensor&) {
        return PickVerdict{1.0, 1.0, true};
    };
    adapt(source, targets, accept, cfg, [&](const EnhancerModel& s, const EnhancerModel& t) {
        students.push_back(flatten_params(s.layers));
        teachers.push_back(flatten_params(t.layers));
    });
    std::vector<double> replay = flatten_params(source.layers);
    double max_err = 0.0;
    for (std::size_t step = 0; step < students.size(); ++step) {
        for (std::size_t i = 0; i < replay.size(); ++i)
            replay[i] = cfg.ema_decay * replay[i] + (1.0 - cfg.ema_decay) * students[step][i];
        for (std::size_t i = 0; i < replay.size(); ++i)
            max_err = std::max(max_err, std::abs(replay[i] - teachers[step][i]));
    }

    const bool pass = decay1_ok && decay0_ok && single_ok && students.size() == 3 &&
                      max_err <= kEmaReplayTol;
    return {pass, std::string("decay-1 frozen: ") + (decay1_ok ? "yes" : "no") +
                      ", decay-0 copies: " + (decay0_ok ? "yes" : "no") +
                      ", single-step exact: " + (single_ok ? "yes" : "no") + ", 3-step replay err " +
                      fmt(max_err)};
}

// Zero-parameter scorer whose head bias pins the sigmoid output.
SmallCnn constant_scorer(int in_ch, double score) {
    SmallCnn net = SmallCnn::init(in_ch, 4, 2, 9);
    for (auto& layer : net.layers) {
        std::fill(layer.w.begin(), layer.w.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
    net.layers.back().b[0] = std::log(score / (1.0 - score));
    return net;
}

Outcome c5_picker_gate() {
    Rng r(55);
    ImageTensor y = random_image(32, 32, r);
    MaskTensor m = random_mask(32, 32, 2, r);

    int picked_count = 0;
    bool only_high_high = true;
    for (double qs : {0.3, 0.9}) {
        for (double ss : {0.3, 0.9}) {
            Picker p{QualityAssessor{constant_scorer(3, qs), 0.5},
                     StructureDetector{constant_scorer(2, ss), 0.5}};
            PickVerdict v = pick(p, y, m);
            picked_count += v.picked ? 1 : 0;
            if (v.picked != (qs > 0.5 && ss > 0.5)) only_high_high = false;
        }
    }

    Picker keeper{QualityAssessor{constant_scorer(3, 0.9), 0.5},
                  StructureDetector{constant_scorer(2, 0.9), 0.5}};
    const std::uint64_t before = keeper.digest();
    EnhancerModel source = EnhancerModel::init(2, 4, 2, 56);
    auto corpus = make_toy_corpus(4, 64, 57);
    Rng dr(58);
    std::vector<ImageTensor> targets;
    for (const auto& [img, mask] : corpus)
        targets.push_back(degrade_one(img, sample_params(kCataractFamily, dr)));
    AdaptConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 59;
    adapt(source, targets, keeper, cfg);
    const bool digest_ok = keeper.digest() == before;

    const bool pass = picked_count == 1 && only_high_high && digest_ok;
    return {pass, "picked in " + std::to_string(picked_count) +
                      "/4 threshold-straddling cells (high, regular only: " +
                      (only_high_high ? "yes" : "no") + "), picker digest unchanged after adapt: " +
                      (digest_ok ? "yes" : "no")};
}

Outcome c6_source_freedom() {
    const char* cli = std::getenv("SFEA_CLI");
    if (!cli || !fs::exists(cli)) return {false, "SFEA_CLI does not point at the CLI binary"};

    fs::path dir = fs::temp_directory_path() / "sfea-source-freedom-audit";
    fs::remove_all(dir);
    fs::create_directories(dir / "targets");

    EnhancerModel source = EnhancerModel::init(2, 4, 2, 77);
    save_enhancer(source, {1, "source", 77, 0}, (dir / "source.ckpt").string());
    Picker picker{QualityAssessor{constant_scorer(3, 0.9), 0.5},
                  StructureDetector{constant_scorer(2, 0.9), 0.5}};
    save_picker(picker, (dir / "picker.ckpt").string(), 77);
    auto corpus = make_toy_corpus(3, 64, 78);
    Rng dr(79);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        ImageTensor x = degrade_one(corpus[i].first, sample_params(kCataractFamily, dr));
        write_image_png(x, (dir / "targets" / ("t" + std::to_string(i) + ".png")).string());
    }

    // The working directory holds exactly the three allowed inputs; relative
    // paths mean the process cannot silently reach source-domain pairs.
    const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(cli) +
                            "' adapt --source source.ckpt --picker picker.ckpt"
                            " --target-dir targets --out adapted.ckpt --epochs 1"
                            " --log-level quiet 2>/dev/null";
    const int raw = std::system(cmd.c_str());
    const int rc = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    const bool wrote = fs::exists(dir / "adapted.ckpt");

    const bool pass = rc == 0 && wrote;
    return {pass, "adapt over {source.ckpt, picker.ckpt, targets/} only: exit " +
                      std::to_string(rc) + ", adapted checkpoint written: " + (wrote ? "yes" : "no")};
}

struct SeedRun {
    MetricReport source, full, no_ce, accept_all;
    double wall_s = 0.0;
};

SeedRun run_seed(const PipelinePreset& desk, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedRun out;
    PipelineArtifacts art = run_source_stage(desk, seed, nullptr);
    out.source = evaluate_source(art.source_model, art.target_samples);

    auto variant = [&](double lambda_ce, bool accept_all) {
        PipelinePreset v = desk;
        v.adapt.lambda_ce = lambda_ce;
        v.adapt.accept_all = accept_all;
        TrainResult r = run_adapt_stage(art, v, seed, nullptr);
        return evaluate_source(r.model, art.target_samples);
    };
    out.full = variant(desk.adapt.lambda_ce, false);
    out.no_ce = variant(0.0, false);
    out.accept_all = variant(desk.adapt.lambda_ce, true);
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

Outcome c7_headline(const SeedRun& seed0) {
    const double gain = seed0.full.ssim - seed0.source.ssim;
    const double dice_drop = seed0.source.dice_mean - seed0.full.dice_mean;
    const bool pass =
        gain >= kSsimGainMin && dice_drop <= kDiceDropMax && seed0.wall_s <= kReproduceBudgetS;
    return {pass, "SSIM " + fmt(seed0.source.ssim) + " -> " + fmt(seed0.full.ssim) + " (gain " +
                      fmt(gain) + ", need >= " + fmt(kSsimGainMin) + "), DICE " +
                      fmt(seed0.source.dice_mean) + " -> " + fmt(seed0.full.dice_mean) +
                      " (drop " + fmt(dice_drop) + ", cap " + fmt(kDiceDropMax) + "), " +
                      fmt(seed0.wall_s) + " s"};
}

Outcome c8_ablations(const std::vector<SeedRun>& runs) {
    bool ce_ok = true, picker_ok = true;
    std::string ce_detail, picker_detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].no_ce.dice_mean > runs[i].full.dice_mean) ce_ok = false;
        if (runs[i].accept_all.ssim > runs[i].full.ssim) picker_ok = false;
        ce_detail += (i ? " " : "") + fmt(runs[i].no_ce.dice_mean) + "<=" + fmt(runs[i].full.dice_mean);
        picker_detail +=
            (i ? " " : "") + fmt(runs[i].accept_all.ssim) + "<=" + fmt(runs[i].full.ssim);
    }
    const bool pass = ce_ok && picker_ok;
    return {pass, "DICE without CE vs full per seed: " + ce_detail +
                      "; SSIM accept-all vs picker-on per seed: " + picker_detail};
}

Outcome c9_noop_identities() {
    EnhancerModel source = EnhancerModel::init(2, 4, 2, 90);
    auto corpus = make_toy_corpus(2, 64, 91);
    Rng dr(92);
    std::vector<ImageTensor> targets;
    for (const auto& [img, mask] : corpus)
        targets.push_back(degrade_one(img, sample_params(kCataractFamily, dr)));
    PickFn accept = [](const ImageTensor&, const MaskTensor&) {
        return PickVerdict{1.0, 1.0, true};
    };

    AdaptConfig zero_epochs;
    zero_epochs.epochs = 0;
    zero_epochs.seed = 93;
    const bool epochs0_ok = adapt(source, targets, accept, zero_epochs).model.digest() ==
                            source.digest();

    AdaptConfig frozen;
    frozen.epochs = 2;
    frozen.batch_size = 1;
    frozen.lr0 = 0.0;
    frozen.ema_decay = 1.0;
    frozen.seed = 94;
    const bool frozen_ok = adapt(source, targets, accept, frozen).model.digest() == source.digest();

    const bool pass = epochs0_ok && frozen_ok;
    return {pass, std::string("epochs=0 digest-identical: ") + (epochs0_ok ? "yes" : "no") +
                      "; lr=0 and decay=1 digest-identical: " + (frozen_ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    // --fast-only: development switch skipping the ~45 min reproduction block.
    const bool fast_only = argc > 1 && std::string(argv[1]) == "--fast-only";

    std::vector<std::pair<int, Outcome>> results;
    std::cerr << "[acceptance] fast criteria (1-6, 9)\n";
    results.emplace_back(1, c1_loss_identities());
    results.emplace_back(2, c2_gradient_check());
    results.emplace_back(3, c3_metric_oracles());
    results.emplace_back(4, c4_ema_algebra());
    results.emplace_back(5, c5_picker_gate());
    results.emplace_back(6, c6_source_freedom());
    results.emplace_back(9, c9_noop_identities());

    if (!fast_only) {
        // Seeds run one after another so each wall-time reading reflects a
        // single uncontended run; parallel seeds on a small machine would
        // inflate every reading past the budget the headline criterion checks.
        std::cerr << "[acceptance] desk-scale reproduction, seeds 0/1/2\n";
        const PipelinePreset desk = desk_preset();
        std::vector<SeedRun> runs(3);
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            runs[seed] = run_seed(desk, seed);
            std::cerr << "[acceptance] seed " << seed << " done in " << fmt(runs[seed].wall_s)
                      << " s\n";
        }
        results.emplace_back(7, c7_headline(runs[0]));
        results.emplace_back(8, c8_ablations(runs));
    }

    std::sort(results.begin(), results.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    bool all_pass = true;
    for (const auto& [n, o] : results) {
        std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
                  << "\n";
        all_pass = all_pass && o.pass;
    }
    return all_pass ? 0 : 1;
}
