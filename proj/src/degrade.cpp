#include "sfea/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sfea {
namespace {

// 1D Gaussian taps: radius ceil(3*sigma), normalized to unit sum.
std::vector<double> gaussian_kernel(double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        total += k[i + radius];
    }
    for (double& v : k) v /= total;
    return k;
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Separable Gaussian blur with replicated borders.
void blur_in_place(Tensor& t, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int h = t.height(), w = t.width(), ch = t.channels();

    Tensor tmp(h, w, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int j = -radius; j <= radius; ++j)
                    acc += k[j + radius] * t.at(y, clampi(x + j, 0, w - 1), c);
                tmp.at(y, x, c) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * tmp.at(clampi(y + i, 0, h - 1), x, c);
                t.at(y, x, c) = acc;
            }
}

// k soft-edged bright or dark discs, uniformly placed.
void stamp_artifacts(Tensor& t, int count, Rng& rng) {
    const int h = t.height(), w = t.width();
    const double m = static_cast<double>(std::min(h, w));
    for (int a = 0; a < count; ++a) {
        double cx = rng.uniform(0.0, w - 1.0);
        double cy = rng.uniform(0.0, h - 1.0);
        double radius = rng.uniform(m / 16.0, m / 5.0);
        double delta = rng.uniform(0.10, 0.35) * (rng.coin() ? 1.0 : -1.0);

        int y0 = clampi(static_cast<int>(cy - radius) - 1, 0, h - 1);
        int y1 = clampi(static_cast<int>(cy + radius) + 1, 0, h - 1);
        int x0 = clampi(static_cast<int>(cx - radius) - 1, 0, w - 1);
        int x1 = clampi(static_cast<int>(cx + radius) + 1, 0, w - 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double dx = x - cx, dy = y - cy;
                double q = 1.0 - (dx * dx + dy * dy) / (radius * radius);
                if (q <= 0.0) continue;
                double fall = q * q;  // soft edge
                for (int c = 0; c < 3; ++c) t.at(y, x, c) += delta * fall;
            }
    }
}

}  // namespace

bool DegradationParams::is_identity() const {
    return blur_sigma == 0.0 && illum_gain == 1.0 && illum_offset == 0.0 &&
           artifact_count == 0 && haze_alpha == 0.0 && speckle_var == 0.0;
}

void DegradationParams::validate() const {
    if (!(blur_sigma >= 0.0)) throw ContractError("degrade: blur_sigma must be >= 0");
    if (!(illum_gain > 0.0)) throw ContractError("degrade: illum_gain must be > 0");
    if (!std::isfinite(illum_offset)) throw ContractError("degrade: illum_offset must be finite");
    if (artifact_count < 0) throw ContractError("degrade: artifact_count must be >= 0");
    if (!(haze_alpha >= 0.0 && haze_alpha <= 1.0)) throw ContractError("degrade: haze_alpha must be in [0,1]");
    for (double c : haze_color)
        if (!(c >= 0.0 && c <= 1.0)) throw ContractError("degrade: haze_color must be in [0,1]");
    if (!(speckle_var >= 0.0)) throw ContractError("degrade: speckle_var must be >= 0");
}

ImageTensor degrade_one(const ImageTensor& y, const DegradationParams& params) {
    params.validate();
    if (params.is_identity()) return y;

    Tensor t = y.tensor();
    Rng base(params.rng_seed);

    // Zero-strength stages are skipped outright so they are exact identities
    // and never consume random draws meant for other stages (each stage pulls
    // from its own forked stream anyway).
    if (params.blur_sigma > 0.0) blur_in_place(t, params.blur_sigma);

    if (params.illum_gain != 1.0 || params.illum_offset != 0.0)
        for (double& v : t.values()) v = v * params.illum_gain + params.illum_offset;

    if (params.artifact_count > 0) {
        Rng r = base.fork(1);
        stamp_artifacts(t, params.artifact_count, r);
    }

    if (params.haze_alpha > 0.0) {
        const double a = params.haze_alpha;
        for (int y2 = 0; y2 < t.height(); ++y2)
            for (int x = 0; x < t.width(); ++x)
                for (int c = 0; c < 3; ++c)
                    t.at(y2, x, c) = (1.0 - a) * t.at(y2, x, c) + a * params.haze_color[c];
    }

    if (params.speckle_var > 0.0) {
        Rng r = base.fork(2);
        const double sd = std::sqrt(params.speckle_var);
        for (double& v : t.values()) v *= 1.0 + sd * r.normal();
    }

    for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
    return ImageTensor(std::move(t));
}

DegradationParams sample_params(DegradationSet modes, Rng& rng) {
    DegradationParams p;
    if (modes & kDegradeBlur) p.blur_sigma = rng.uniform(0.5, 2.0);
    if (modes & kDegradeIllumination) {
        p.illum_gain = rng.uniform(0.7, 1.3);
        p.illum_offset = rng.uniform(-0.15, 0.15);
    }
    if (modes & kDegradeArtifact) p.artifact_count = rng.uniform_int(1, 4);
    if (modes & kDegradeHaze) {
        p.haze_alpha = rng.uniform(0.25, 0.6);
        for (double& c : p.haze_color) c = rng.uniform(0.75, 0.95);
    }
    if (modes & kDegradeSpeckle) p.speckle_var = rng.uniform(0.002, 0.01);
    p.rng_seed = rng.next_u64();
    return p;
}

std::vector<SourceSample> synthesize_dataset(
    const std::vector<std::pair<ImageTensor, MaskTensor>>& clean, int per_image,
    DegradationSet modes, std::uint64_t seed) {
    if (clean.empty()) throw ContractError("synthesize_dataset: clean list is empty");
    if (per_image < 1) throw ContractError("synthesize_dataset: per_image must be >= 1");

    std::vector<SourceSample> out;
    out.reserve(clean.size() * static_cast<std::size_t>(per_image));
    for (std::size_t i = 0; i < clean.size(); ++i)
        for (int j = 0; j < per_image; ++j) {
            std::uint64_t sample_index = i * static_cast<std::size_t>(per_image) + j;
            Rng r(seed + sample_index);
            DegradationParams params = sample_params(modes, r);
            ImageTensor x = degrade_one(clean[i].first, params);
            out.push_back(SourceSample{std::move(x), clean[i].first, clean[i].second, params});
        }
    return out;
}

namespace {

struct ToyDraw {
    Tensor image;
    std::vector<int> labels;
    double vessel_fraction = 0.0;
};

ToyDraw draw_toy_image(int size, Rng& rng) {
    ToyDraw d{Tensor(size, size, 3), std::vector<int>(static_cast<std::size_t>(size) * size, 0), 0.0};

    // Warm smooth background: base color, gentle linear gradient, radial falloff.
    double base[3] = {rng.uniform(0.55, 0.80), rng.uniform(0.30, 0.48), rng.uniform(0.12, 0.26)};
    double ax = rng.uniform(-0.12, 0.12) / size;
    double ay = rng.uniform(-0.12, 0.12) / size;
    const double half = (size - 1) / 2.0;
    const double dmax2 = 2.0 * half * half;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double grad = ax * (x - half) + ay * (y - half);
            double r2 = (x - half) * (x - half) + (y - half) * (y - half);
            double vignette = 1.0 - 0.3 * (r2 / dmax2);
            for (int c = 0; c < 3; ++c)
                d.image.at(y, x, c) = std::clamp((base[c] + grad) * vignette, 0.02, 0.98);
        }

    // Dark tapering strokes, marked in the label grid by their hard radius and
    // in the image by a 1px-feathered darkening.
    Tensor alpha(size, size, 1);
    int strokes = rng.uniform_int(3, 6);
    for (int s = 0; s < strokes; ++s) {
        double px = rng.uniform(0.1, 0.9) * size;
        double py = rng.uniform(0.1, 0.9) * size;
        double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        double length = rng.uniform(0.6, 1.3) * size;
        double t0 = rng.uniform(size / 64.0, size / 36.0);
        int steps = static_cast<int>(length / 0.5);
        for (int st = 0; st < steps; ++st) {
            theta += rng.uniform(-0.22, 0.22);
            px += 0.5 * std::cos(theta);
            py += 0.5 * std::sin(theta);
            if (px < 1.0 || py < 1.0 || px > size - 2.0 || py > size - 2.0) break;
            double t = t0 * (1.0 - 0.45 * st / steps);

            int y0 = clampi(static_cast<int>(py - t) - 1, 0, size - 1);
            int y1 = clampi(static_cast<int>(py + t) + 1, 0, size - 1);
            int x0 = clampi(static_cast<int>(px - t) - 1, 0, size - 1);
            int x1 = clampi(static_cast<int>(px + t) + 1, 0, size - 1);
            for (int yy = y0; yy <= y1; ++yy)
                for (int xx = x0; xx <= x1; ++xx) {
                    double dist = std::hypot(xx - px, yy - py);
                    if (dist <= t) d.labels[static_cast<std::size_t>(yy) * size + xx] = 1;
                    double soft = std::clamp(t + 0.5 - dist, 0.0, 1.0);
                    alpha.at(yy, xx, 0) = std::max(alpha.at(yy, xx, 0), soft);
                }
        }
    }

    long vessel = 0;
    for (int l : d.labels) vessel += l;
    d.vessel_fraction = static_cast<double>(vessel) / (static_cast<double>(size) * size);

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double dark = 1.0 - 0.55 * alpha.at(y, x, 0);
            for (int c = 0; c < 3; ++c) d.image.at(y, x, c) *= dark;
        }
    return d;
}

}  // namespace

std::vector<std::pair<ImageTensor, MaskTensor>> make_toy_corpus(int n, int size,
                                                                std::uint64_t seed) {
    if (n < 1) throw ContractError("make_toy_corpus: n must be >= 1");
    if (size < 64) throw ContractError("make_toy_corpus: size must be >= 64");

    std::vector<std::pair<ImageTensor, MaskTensor>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::forked(seed, static_cast<std::uint64_t>(i));
        // Redraw until the vessel area lands comfortably inside the contract
        // band; one draw nearly always suffices.
        for (int attempt = 0; attempt < 64; ++attempt) {
            ToyDraw d = draw_toy_image(size, rng);
            if (d.vessel_fraction > 0.025 && d.vessel_fraction < 0.30) {
                out.emplace_back(ImageTensor(std::move(d.image)),
                                 MaskTensor::from_labels(size, size, 2, d.labels));
                break;
            }
            if (attempt == 63)
                throw NumericError("make_toy_corpus: could not draw an in-band vessel image");
        }
    }
    return out;
}

}  // namespace sfea
