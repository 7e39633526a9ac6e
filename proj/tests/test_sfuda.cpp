#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "sfea/sfuda.hpp"

using namespace sfea;

namespace {

std::vector<ImageTensor> toy_targets(int n, int size, std::uint64_t seed) {
    auto corpus = make_toy_corpus(n, size, seed);
    std::vector<ImageTensor> targets;
    Rng rng(seed + 1);
    for (auto& [img, mask] : corpus) {
        DegradationParams params;
        params.blur_sigma = rng.uniform(0.5, 1.2);
        params.haze_alpha = rng.uniform(0.3, 0.5);
        params.rng_seed = rng.next_u64();
        targets.push_back(degrade_one(img, params));
    }
    return targets;
}

PickFn accept_all_fn() {
    return [](const ImageTensor&, const MaskTensor&) { return PickVerdict{1.0, 1.0, true}; };
}

AdaptConfig mini_adapt_config() {
    AdaptConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.lr0 = 1e-3;
    cfg.ema_decay = 0.9;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_SUITE("perturb") {
    TEST_CASE("zero magnitudes are the bitwise identity") {
        auto corpus = make_toy_corpus(1, 64, 70);
        PerturbConfig cfg;
        cfg.brightness_delta = 0.0;
        cfg.contrast_range = 0.0;
        cfg.color_jitter = 0.0;
        Rng rng(1);
        ImageTensor out = perturb(corpus[0].first, cfg, rng);
        CHECK(out.tensor().digest() == corpus[0].first.tensor().digest());
    }

    TEST_CASE("applied offsets follow the formula and the clamp") {
        ImageTensor half(Tensor(32, 32, 3, 0.5));
        ImageTensor bright = perturb_apply(half, 0.1, 1.0, {0.0, 0.0, 0.0});
        double expected = 1.0 * (0.5 + 0.0) + 0.1;
        for (int c = 0; c < 3; ++c) CHECK(bright.tensor().at(7, 9, c) == expected);

        ImageTensor high(Tensor(32, 32, 3, 0.95));
        ImageTensor clamped = perturb_apply(high, 0.1, 1.0, {0.0, 0.0, 0.0});
        CHECK(clamped.tensor().at(3, 4, 0) == 1.0);
    }

    TEST_CASE("draws stay inside the configured magnitudes") {
        ImageTensor half(Tensor(32, 32, 3, 0.5));
        PerturbConfig cfg;  // defaults: 0.1 / 0.1 / 0.05
        Rng rng(71);
        double lo = 0.9 * (0.5 - 0.05) - 0.1;
        double hi = 1.1 * (0.5 + 0.05) + 0.1;
        for (int trial = 0; trial < 100; ++trial) {
            ImageTensor out = perturb(half, cfg, rng);
            for (int c = 0; c < 3; ++c) {
                double v = out.tensor().at(11, 13, c);
                CHECK(v >= lo);
                CHECK(v <= hi);
                // spatially constant input stays constant per channel
                CHECK(out.tensor().at(0, 0, c) == v);
            }
        }
    }

    TEST_CASE("negative magnitudes are rejected") {
        PerturbConfig cfg;
        cfg.brightness_delta = -0.1;
        ImageTensor half(Tensor(32, 32, 3, 0.5));
        Rng rng(1);
        CHECK_THROWS_AS(perturb(half, cfg, rng), ContractError);
    }
}

TEST_SUITE("build_proxy") {
    TEST_CASE("stub verdicts gate the proxy exactly") {
        EnhancerModel teacher = EnhancerModel::init(2, 4, 2, 72);
        auto targets = toy_targets(3, 64, 73);

        auto all = build_proxy(teacher, accept_all_fn(), targets);
        CHECK(all.size() == 3);
        for (const auto& r : all) CHECK(r.verdict.picked);

        auto none = build_proxy(
            teacher, [](const ImageTensor&, const MaskTensor&) { return PickVerdict{0.0, 0.0, false}; },
            targets);
        CHECK(none.empty());

        // quality scores 0.2, 0.8, 0.9 against a 0.5 gate admit exactly two
        std::vector<double> scores{0.2, 0.8, 0.9};
        int call = 0;
        auto mixed = build_proxy(
            teacher,
            [&](const ImageTensor&, const MaskTensor&) {
                double q = scores[call++];
                return PickVerdict{q, 1.0, q >= 0.5};
            },
            targets);
        CHECK(mixed.size() == 2);
    }

    TEST_CASE("records carry the teacher's outputs") {
        EnhancerModel teacher = EnhancerModel::init(2, 4, 2, 74);
        auto targets = toy_targets(2, 64, 75);
        auto proxy = build_proxy(teacher, accept_all_fn(), targets);
        REQUIRE(proxy.size() == 2);
        for (std::size_t i = 0; i < proxy.size(); ++i) {
            EnhanceOutput out = forward(teacher, targets[i]);
            CHECK(proxy[i].x_omega.tensor().digest() == targets[i].tensor().digest());
            CHECK(proxy[i].y_omega.tensor().digest() == out.enhanced.tensor().digest());
            CHECK(proxy[i].m_omega.tensor().digest() == out.mask_pred.argmax_onehot().tensor().digest());
            CHECK(proxy[i].m_omega.kind() == MaskKind::GroundTruth);
        }
    }
}

TEST_SUITE("adapt") {
    TEST_CASE("epochs=0 returns a parameter-identical model") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 76);
        auto targets = toy_targets(2, 64, 77);
        AdaptConfig cfg = mini_adapt_config();
        cfg.epochs = 0;
        TrainResult r = adapt(source, targets, accept_all_fn(), cfg);
        CHECK(r.model.digest() == source.digest());
        CHECK(r.log.empty());
    }

    TEST_CASE("lr=0 with decay=1 freezes every parameter") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 78);
        auto targets = toy_targets(2, 64, 79);
        AdaptConfig cfg = mini_adapt_config();
        cfg.lr0 = 0.0;
        cfg.ema_decay = 1.0;
        TrainResult r = adapt(source, targets, accept_all_fn(), cfg);
        CHECK(r.model.digest() == source.digest());
        CHECK(r.log.size() == 2);
        CHECK(r.log[0].proxy_size == 2);
    }

    TEST_CASE("teacher equals the EMA recurrence replayed from student snapshots") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 80);
        auto targets = toy_targets(3, 64, 81);
        AdaptConfig cfg = mini_adapt_config();
        cfg.epochs = 1;
        cfg.batch_size = 1;  // three student steps
        std::vector<std::vector<double>> students;
        TrainResult r = adapt(source, targets, accept_all_fn(), cfg,
                              [&](const EnhancerModel& student, const EnhancerModel&) {
                                  students.push_back(flatten_params(student.layers));
                              });
        REQUIRE(students.size() == 3);

        std::vector<double> theta = flatten_params(source.layers);
        for (const auto& snap : students)
            for (std::size_t i = 0; i < theta.size(); ++i)
                theta[i] = cfg.ema_decay * theta[i] + (1.0 - cfg.ema_decay) * snap[i];
        std::vector<double> got = flatten_params(r.model.layers);
        REQUIRE(got.size() == theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) CHECK(got[i] == theta[i]);
    }

    TEST_CASE("same seed reproduces the adapted teacher bitwise") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 82);
        auto targets = toy_targets(3, 64, 83);
        AdaptConfig cfg = mini_adapt_config();
        TrainResult a = adapt(source, targets, accept_all_fn(), cfg);
        TrainResult b = adapt(source, targets, accept_all_fn(), cfg);
        CHECK(a.model.digest() == b.model.digest());
        CHECK(a.model.digest() != source.digest());
    }

    TEST_CASE("empty targets and empty first refresh are rejected") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 84);
        AdaptConfig cfg = mini_adapt_config();
        CHECK_THROWS_AS(adapt(source, {}, accept_all_fn(), cfg), ContractError);

        auto targets = toy_targets(2, 64, 85);
        try {
            adapt(source, targets,
                  [](const ImageTensor&, const MaskTensor&) { return PickVerdict{0.0, 0.0, false}; },
                  cfg);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("tau") != std::string::npos);
        }
    }

    TEST_CASE("an empty later refresh reuses the previous proxy and flags it") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 86);
        auto targets = toy_targets(2, 64, 87);
        AdaptConfig cfg = mini_adapt_config();
        cfg.epochs = 3;
        int calls = 0;
        int n = static_cast<int>(targets.size());
        TrainResult r = adapt(source, targets,
                              [&](const ImageTensor&, const MaskTensor&) {
                                  bool first_epoch = calls < n;
                                  ++calls;
                                  return PickVerdict{1.0, 1.0, first_epoch};
                              },
                              cfg);
        REQUIRE(r.log.size() == 3);
        CHECK(!r.log[0].proxy_reused);
        CHECK(r.log[1].proxy_reused);
        CHECK(r.log[2].proxy_reused);
        CHECK(r.log[1].proxy_size == r.log[0].proxy_size);
    }

    TEST_CASE("picker overload: gate digest is unchanged and accept_all bypasses it") {
        EnhancerModel source = EnhancerModel::init(2, 4, 2, 88);
        auto targets = toy_targets(2, 64, 89);
        Picker picker;
        picker.iqa = QualityAssessor{SmallCnn::init(3, 4, 2, 90), 0.5};
        picker.isd = StructureDetector{SmallCnn::init(2, 4, 2, 91), 0.5};
        std::uint64_t before = picker.digest();

        AdaptConfig cfg = mini_adapt_config();
        cfg.accept_all = true;
        TrainResult r = adapt(source, targets, picker, cfg);
        CHECK(picker.digest() == before);
        CHECK(r.log[0].proxy_size == 2);  // gate bypassed, everything admitted
    }
}

TEST_SUITE("adapt_report") {
    TEST_CASE("identical models give all-zero deltas counted as unchanged") {
        EnhancerModel model = EnhancerModel::init(2, 4, 2, 92);
        auto corpus = make_toy_corpus(3, 64, 93);
        std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
        for (auto& [img, mask] : corpus) {
            DegradationParams params;
            params.haze_alpha = 0.4;
            pairs.emplace_back(degrade_one(img, params), img);
        }
        AdaptReport rep = adapt_report(model, model, pairs);
        CHECK(rep.rows.size() == 3);
        CHECK(rep.unchanged == 3);
        CHECK(rep.improved == 0);
        CHECK(rep.regressed == 0);
        for (const auto& row : rep.rows) CHECK(row.delta == 0.0);
    }

    TEST_CASE("summary counts match a recount of the rows") {
        EnhancerModel before = EnhancerModel::init(2, 4, 2, 94);
        EnhancerModel after = EnhancerModel::init(2, 4, 2, 95);  // different random net
        auto corpus = make_toy_corpus(4, 64, 96);
        std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
        for (auto& [img, mask] : corpus) pairs.emplace_back(img, img);

        double tol = 1e-4;
        AdaptReport rep = adapt_report(before, after, pairs, tol);
        CHECK(rep.rows.size() == 4);
        int up = 0, same = 0, down = 0;
        for (const auto& row : rep.rows) {
            CHECK(row.delta == row.ssim_after - row.ssim_before);
            if (std::abs(row.delta) <= tol)
                ++same;
            else if (row.delta > 0.0)
                ++up;
            else
                ++down;
        }
        CHECK(rep.improved == up);
        CHECK(rep.unchanged == same);
        CHECK(rep.regressed == down);
        CHECK(up + same + down == 4);
    }
}
