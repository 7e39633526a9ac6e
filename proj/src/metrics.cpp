#include "sfea/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace sfea {
namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// 11x11 Gaussian window normalized to unit sum, built once.
const std::array<double, kWin * kWin>& ssim_window() {
    static const std::array<double, kWin * kWin> w = [] {
        std::array<double, kWin * kWin> out{};
        double total = 0.0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                double dy = i - (kWin - 1) / 2.0;
                double dx = j - (kWin - 1) / 2.0;
                out[i * kWin + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                total += out[i * kWin + j];
            }
        for (double& v : out) v /= total;
        return out;
    }();
    return w;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
    const auto& w = ssim_window();
    const int h = a.height(), wd = a.width(), ch = a.tensor().channels();

    double total = 0.0;
    long windows = 0;
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y + kWin <= h; ++y)
            for (int x = 0; x + kWin <= wd; ++x) {
                // Weighted first/second moments over the window. Every term is
                // symmetric under swapping a and b, so the result is too.
                double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        double wij = w[i * kWin + j];
                        double va = a.at(y + i, x + j, c);
                        double vb = b.at(y + i, x + j, c);
                        ma += wij * va;
                        mb += wij * vb;
                        saa += wij * (va * va);
                        sbb += wij * (vb * vb);
                        sab += wij * (va * vb);
                    }
                double var_a = saa - ma * ma;
                double var_b = sbb - mb * mb;
                double cov = sab - ma * mb;
                double num = (2.0 * (ma * mb) + kC1) * (2.0 * cov + kC2);
                double den = (ma * ma + mb * mb + kC1) * (var_a + var_b + kC2);
                total += num / den;
                ++windows;
            }
    return total / static_cast<double>(windows);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
    double se = 0.0;
    auto va = a.tensor().values();
    auto vb = b.tensor().values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        double d = va[i] - vb[i];
        se += d * d;
    }
    double mse = se / static_cast<double>(va.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double DiceIou::mean_dice() const {
    double s = 0.0;
    for (double v : dice) s += v;
    return s / static_cast<double>(dice.size());
}

double DiceIou::mean_iou() const {
    double s = 0.0;
    for (double v : iou) s += v;
    return s / static_cast<double>(iou.size());
}

DiceIou dice_iou(const MaskTensor& pred, const MaskTensor& ref) {
    if (pred.num_classes() != ref.num_classes())
        throw ContractError("dice_iou: class-count mismatch");
    if (!pred.same_shape(ref)) throw ContractError("dice_iou: shape mismatch");

    const int nc = pred.num_classes();
    std::vector<long> np(nc, 0), nr(nc, 0), ni(nc, 0);
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
            int cp = pred.label_at(y, x);
            int cr = ref.label_at(y, x);
            ++np[cp];
            ++nr[cr];
            if (cp == cr) ++ni[cp];
        }

    DiceIou out;
    out.dice.resize(nc);
    out.iou.resize(nc);
    for (int c = 0; c < nc; ++c) {
        long both = np[c] + nr[c];
        if (both == 0) {
            out.dice[c] = 1.0;
            out.iou[c] = 1.0;
        } else {
            out.dice[c] = 2.0 * static_cast<double>(ni[c]) / static_cast<double>(both);
            out.iou[c] = static_cast<double>(ni[c]) / static_cast<double>(both - ni[c]);
        }
    }
    return out;
}

}  // namespace sfea
