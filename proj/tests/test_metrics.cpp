#include <doctest.h>

#include <cmath>
#include <vector>

#include "sfea/metrics.hpp"

using namespace sfea;

namespace {

ImageTensor random_image(int h, int w, Rng& r, double lo = 0.0, double hi = 1.0) {
    Tensor t(h, w, 3);
    for (double& v : t.values()) v = r.uniform(lo, hi);
    return ImageTensor(std::move(t));
}

MaskTensor random_mask(int h, int w, int classes, Rng& r) {
    std::vector<int> labels(static_cast<std::size_t>(h) * w);
    for (int& l : labels) l = r.uniform_int(0, classes - 1);
    return MaskTensor::from_labels(h, w, classes, labels);
}

// Overlap counts recomputed straight from label arrays, independent of the
// metric implementation.
void brute_overlap(const std::vector<int>& p, const std::vector<int>& q, int c,
                   long& np, long& nq, long& ni) {
    np = nq = ni = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == c) ++np;
        if (q[i] == c) ++nq;
        if (p[i] == c && q[i] == c) ++ni;
    }
}

}  // namespace

TEST_SUITE("ssim") {
    TEST_CASE("identical images score exactly 1") {
        Rng r(1);
        ImageTensor a = random_image(24, 24, r);
        CHECK(ssim(a, a) == 1.0);
        CHECK(ssim(ImageTensor::constant(16, 16, 0.5), ImageTensor::constant(16, 16, 0.5)) == 1.0);
    }

    TEST_CASE("constant black vs constant white matches the closed form") {
        // Zero variances, means 0 and 1: numerator (2*0*1+C1)*C2, denominator
        // (0+1+C1)*C2, so the score collapses to C1/(1+C1).
        double c1 = 0.01 * 0.01;
        double expected = c1 / (1.0 + c1);
        double got = ssim(ImageTensor::constant(16, 16, 0.0), ImageTensor::constant(16, 16, 1.0));
        CHECK(std::abs(got - expected) < 1e-6);
        CHECK(got == doctest::Approx(9.999e-5).epsilon(1e-3));
    }

    TEST_CASE("symmetric in its arguments") {
        Rng r(2);
        for (int trial = 0; trial < 5; ++trial) {
            ImageTensor a = random_image(20, 28, r);
            ImageTensor b = random_image(20, 28, r);
            CHECK(ssim(a, b) == ssim(b, a));
        }
    }

    TEST_CASE("pure function: repeated calls agree bitwise") {
        Rng r(3);
        ImageTensor a = random_image(18, 18, r);
        ImageTensor b = random_image(18, 18, r);
        CHECK(ssim(a, b) == ssim(a, b));
    }

    TEST_CASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(ssim(ImageTensor::constant(16, 16, 0.5), ImageTensor::constant(16, 18, 0.5)),
                        ContractError);
    }
}

TEST_SUITE("psnr") {
    TEST_CASE("zero error returns the infinity sentinel") {
        ImageTensor a = ImageTensor::constant(16, 16, 0.3);
        CHECK(std::isinf(psnr(a, a)));
        CHECK(psnr(a, a) > 0);
    }

    TEST_CASE("uniform deltas match hand-computed decibel values") {
        ImageTensor a = ImageTensor::constant(16, 16, 0.25);
        ImageTensor b = ImageTensor::constant(16, 16, 0.75);
        CHECK(std::abs(psnr(a, b) - 6.0206) < 1e-3);  // MSE 0.25

        ImageTensor c = ImageTensor::constant(16, 16, 0.45);
        ImageTensor d = ImageTensor::constant(16, 16, 0.55);
        CHECK(std::abs(psnr(c, d) - 20.0) < 1e-3);  // MSE 0.01
    }

    TEST_CASE("strictly decreases as noise amplitude grows") {
        Rng r(4);
        ImageTensor base = random_image(16, 16, r, 0.25, 0.75);
        Tensor noise(16, 16, 3);
        for (double& v : noise.values()) v = r.uniform(-1.0, 1.0);

        auto with_amp = [&](double amp) {
            Tensor t(16, 16, 3);
            for (std::size_t i = 0; i < t.size(); ++i)
                t.values()[i] = base.tensor().values()[i] + amp * noise.values()[i];
            return psnr(base, ImageTensor(std::move(t)));
        };
        double p05 = with_amp(0.05), p10 = with_amp(0.10), p20 = with_amp(0.20);
        CHECK(p05 > p10);
        CHECK(p10 > p20);
    }

    TEST_CASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(psnr(ImageTensor::constant(16, 16, 0.5), ImageTensor::constant(18, 16, 0.5)),
                        ContractError);
    }
}

TEST_SUITE("dice_iou") {
    TEST_CASE("identical masks are perfect per class") {
        Rng r(5);
        MaskTensor m = random_mask(16, 16, 3, r);
        DiceIou di = dice_iou(m, m);
        for (double v : di.dice) CHECK(v == 1.0);
        for (double v : di.iou) CHECK(v == 1.0);
    }

    TEST_CASE("disjoint equal-size foregrounds score zero on the foreground class") {
        std::vector<int> pa(16 * 16, 0), pb(16 * 16, 0);
        for (int i = 0; i < 4; ++i) pa[i] = 1;
        for (int i = 8; i < 12; ++i) pb[i] = 1;
        DiceIou di = dice_iou(MaskTensor::from_labels(16, 16, 2, pa),
                              MaskTensor::from_labels(16, 16, 2, pb));
        CHECK(di.dice[1] == 0.0);
        CHECK(di.iou[1] == 0.0);
    }

    TEST_CASE("|P|=|R|=4 with overlap 2 gives dice 1/2 and iou 1/3 exactly") {
        std::vector<int> pa(16 * 16, 0), pb(16 * 16, 0);
        for (int i = 0; i < 4; ++i) pa[i] = 1;   // P = {0,1,2,3}
        for (int i = 2; i < 6; ++i) pb[i] = 1;   // R = {2,3,4,5}
        DiceIou di = dice_iou(MaskTensor::from_labels(16, 16, 2, pa),
                              MaskTensor::from_labels(16, 16, 2, pb));
        CHECK(di.dice[1] == 0.5);
        CHECK(di.iou[1] == 1.0 / 3.0);

        // Background class audited against a brute-force recount.
        long np, nq, ni;
        brute_overlap(pa, pb, 0, np, nq, ni);
        CHECK(di.dice[0] == 2.0 * ni / static_cast<double>(np + nq));
        CHECK(di.iou[0] == static_cast<double>(ni) / static_cast<double>(np + nq - ni));
    }

    TEST_CASE("class absent from both masks counts as a perfect 1.0") {
        std::vector<int> labels(16 * 16, 0);
        labels[0] = 1;  // class 2 never appears
        MaskTensor m = MaskTensor::from_labels(16, 16, 3, labels);
        DiceIou di = dice_iou(m, m);
        CHECK(di.dice[2] == 1.0);
        CHECK(di.iou[2] == 1.0);
    }

    TEST_CASE("dice dominates iou, equal only at the extremes") {
        Rng r(6);
        for (int trial = 0; trial < 20; ++trial) {
            MaskTensor a = random_mask(16, 16, 3, r);
            MaskTensor b = random_mask(16, 16, 3, r);
            DiceIou di = dice_iou(a, b);
            for (std::size_t c = 0; c < di.dice.size(); ++c) {
                CHECK(di.dice[c] >= di.iou[c]);
                if (di.dice[c] != 0.0 && di.dice[c] != 1.0) CHECK(di.dice[c] > di.iou[c]);
                if (di.dice[c] == 0.0) CHECK(di.iou[c] == 0.0);
                if (di.dice[c] == 1.0) CHECK(di.iou[c] == 1.0);
            }
        }
    }

    TEST_CASE("matches brute-force set arithmetic on random masks") {
        Rng r(7);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<int> pa(16 * 16), pb(16 * 16);
            for (int& v : pa) v = r.uniform_int(0, 2);
            for (int& v : pb) v = r.uniform_int(0, 2);
            DiceIou di = dice_iou(MaskTensor::from_labels(16, 16, 3, pa),
                                  MaskTensor::from_labels(16, 16, 3, pb));
            for (int c = 0; c < 3; ++c) {
                long np, nq, ni;
                brute_overlap(pa, pb, c, np, nq, ni);
                if (np + nq == 0) {
                    CHECK(di.dice[c] == 1.0);
                } else {
                    CHECK(di.dice[c] == 2.0 * ni / static_cast<double>(np + nq));
                    CHECK(di.iou[c] == static_cast<double>(ni) / static_cast<double>(np + nq - ni));
                }
            }
        }
    }

    TEST_CASE("class-count mismatch is rejected") {
        std::vector<int> a(16 * 16, 0), b(16 * 16, 0);
        a[0] = 1;
        b[0] = 1;
        CHECK_THROWS_AS(dice_iou(MaskTensor::from_labels(16, 16, 2, a),
                                 MaskTensor::from_labels(16, 16, 3, b)),
                        ContractError);
    }
}
