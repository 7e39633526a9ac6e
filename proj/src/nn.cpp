#include "sfea/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace sfea {
namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// cols(k*in_ch + c, y*w + x) = in(y + ky(k), x + kx(k), c), zero outside.
void im2col3x3(const Tensor& in, std::vector<double>& cols) {
    const int h = in.height(), w = in.width(), ch = in.channels();
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    cols.assign(static_cast<std::size_t>(9) * ch * pixels, 0.0);
    for (int k = 0; k < 9; ++k) {
        const int ky = k / 3 - 1, kx = k % 3 - 1;
        for (int y = 0; y < h; ++y) {
            const int sy = y + ky;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
                const int sx = x + kx;
                if (sx < 0 || sx >= w) continue;
                const double* src = in.data() + (static_cast<std::size_t>(sy) * w + sx) * ch;
                double* dst = cols.data() + (static_cast<std::size_t>(k) * ch) * pixels +
                              static_cast<std::size_t>(y) * w + x;
                for (int c = 0; c < ch; ++c) dst[static_cast<std::size_t>(c) * pixels] = src[c];
            }
        }
    }
}

}  // namespace

void Gradients::init_like(const std::vector<ConvLayer>& layers) {
    dw.resize(layers.size());
    db.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        dw[i].assign(layers[i].w.size(), 0.0);
        db[i].assign(layers[i].b.size(), 0.0);
    }
}

void Gradients::zero() {
    for (auto& v : dw) v.assign(v.size(), 0.0);
    for (auto& v : db) v.assign(v.size(), 0.0);
}

void Gradients::scale(double s) {
    for (auto& v : dw)
        for (double& x : v) x *= s;
    for (auto& v : db)
        for (double& x : v) x *= s;
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& in) {
    if (in.channels() != layer.in_ch) throw ContractError("conv_forward: channel mismatch");
    const int h = in.height(), w = in.width();
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    const std::size_t k = static_cast<std::size_t>(9) * layer.in_ch;

    std::vector<double> cols;
    im2col3x3(in, cols);

    Tensor out(h, w, layer.out_ch);
    // out(p, o) = sum_r cols(r, p) * w(o, r)
    MatMap out_m(out.data(), static_cast<Eigen::Index>(pixels), layer.out_ch);
    ConstMatMap cols_m(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(pixels));
    ConstMatMap w_m(layer.w.data(), layer.out_ch, static_cast<Eigen::Index>(k));
    out_m.noalias() = cols_m.transpose() * w_m.transpose();
    for (std::size_t p = 0; p < pixels; ++p) {
        double* row = out.data() + p * layer.out_ch;
        for (int o = 0; o < layer.out_ch; ++o) row[o] += layer.b[o];
    }
    return out;
}

Tensor conv_backward(const ConvLayer& layer, const Tensor& in, const Tensor& dout,
                     Gradients& grads, int layer_index) {
    const int h = in.height(), w = in.width(), ch = in.channels();
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    const std::size_t k = static_cast<std::size_t>(9) * ch;

    std::vector<double> cols;
    im2col3x3(in, cols);
    ConstMatMap cols_m(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(pixels));
    ConstMatMap dout_m(dout.data(), static_cast<Eigen::Index>(pixels), layer.out_ch);

    // dW(o, r) += sum_p dout(p, o) * cols(r, p)
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dw =
        dout_m.transpose() * cols_m.transpose();
    auto& gw = grads.dw[layer_index];
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.data()[i];

    auto& gb = grads.db[layer_index];
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* row = dout.data() + p * layer.out_ch;
        for (int o = 0; o < layer.out_ch; ++o) gb[o] += row[o];
    }

    // dcols(r, p) = sum_o w(o, r) * dout(p, o), then scatter back to pixels.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dcols =
        (dout_m * ConstMatMap(layer.w.data(), layer.out_ch, static_cast<Eigen::Index>(k))).transpose();

    Tensor din(h, w, ch);
    for (int kk = 0; kk < 9; ++kk) {
        const int ky = kk / 3 - 1, kx = kk % 3 - 1;
        for (int y = 0; y < h; ++y) {
            const int sy = y + ky;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
                const int sx = x + kx;
                if (sx < 0 || sx >= w) continue;
                double* dst = din.data() + (static_cast<std::size_t>(sy) * w + sx) * ch;
                const double* src = dcols.data() + (static_cast<std::size_t>(kk) * ch) * pixels +
                                    static_cast<std::size_t>(y) * w + x;
                for (int c = 0; c < ch; ++c) dst[c] += src[static_cast<std::size_t>(c) * pixels];
            }
        }
    }
    return din;
}

Tensor silu(const Tensor& z) {
    Tensor a(z.height(), z.width(), z.channels());
    auto zs = z.values();
    auto as = a.values();
    for (std::size_t i = 0; i < zs.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-zs[i]));
        as[i] = zs[i] * s;
    }
    return a;
}

Tensor silu_backward(const Tensor& z, const Tensor& da) {
    Tensor dz(z.height(), z.width(), z.channels());
    auto zs = z.values();
    auto das = da.values();
    auto dzs = dz.values();
    for (std::size_t i = 0; i < zs.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-zs[i]));
        dzs[i] = das[i] * (s * (1.0 + zs[i] * (1.0 - s)));
    }
    return dz;
}

Tensor sigmoid(const Tensor& z) {
    Tensor a(z.height(), z.width(), z.channels());
    auto zs = z.values();
    auto as = a.values();
    for (std::size_t i = 0; i < zs.size(); ++i) as[i] = 1.0 / (1.0 + std::exp(-zs[i]));
    return a;
}

Tensor sigmoid_backward_from_act(const Tensor& a, const Tensor& da) {
    Tensor dz(a.height(), a.width(), a.channels());
    auto as = a.values();
    auto das = da.values();
    auto dzs = dz.values();
    for (std::size_t i = 0; i < as.size(); ++i) dzs[i] = das[i] * as[i] * (1.0 - as[i]);
    return dz;
}

Tensor softmax_channels(const Tensor& z) {
    Tensor p(z.height(), z.width(), z.channels());
    const int ch = z.channels();
    const std::size_t pixels = z.size() / ch;
    for (std::size_t px = 0; px < pixels; ++px) {
        const double* zp = z.data() + px * ch;
        double* pp = p.data() + px * ch;
        double mx = zp[0];
        for (int c = 1; c < ch; ++c) mx = std::max(mx, zp[c]);
        double total = 0.0;
        for (int c = 0; c < ch; ++c) {
            pp[c] = std::exp(zp[c] - mx);
            total += pp[c];
        }
        for (int c = 0; c < ch; ++c) pp[c] /= total;
    }
    return p;
}

Tensor avgpool2(const Tensor& in) {
    if (in.height() % 2 != 0 || in.width() % 2 != 0)
        throw ContractError("avgpool2: spatial dims must be even, got " + in.shape_str());
    const int h = in.height() / 2, w = in.width() / 2, ch = in.channels();
    Tensor out(h, w, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                out.at(y, x, c) = 0.25 * (in.at(2 * y, 2 * x, c) + in.at(2 * y, 2 * x + 1, c) +
                                          in.at(2 * y + 1, 2 * x, c) + in.at(2 * y + 1, 2 * x + 1, c));
    return out;
}

Tensor avgpool2_backward(int in_h, int in_w, const Tensor& dout) {
    Tensor din(in_h, in_w, dout.channels());
    for (int y = 0; y < dout.height(); ++y)
        for (int x = 0; x < dout.width(); ++x)
            for (int c = 0; c < dout.channels(); ++c) {
                double g = 0.25 * dout.at(y, x, c);
                din.at(2 * y, 2 * x, c) = g;
                din.at(2 * y, 2 * x + 1, c) = g;
                din.at(2 * y + 1, 2 * x, c) = g;
                din.at(2 * y + 1, 2 * x + 1, c) = g;
            }
    return din;
}

Tensor upsample2(const Tensor& in) {
    Tensor out(in.height() * 2, in.width() * 2, in.channels());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < in.channels(); ++c) out.at(y, x, c) = in.at(y / 2, x / 2, c);
    return out;
}

Tensor upsample2_backward(const Tensor& dout) {
    Tensor din(dout.height() / 2, dout.width() / 2, dout.channels());
    for (int y = 0; y < dout.height(); ++y)
        for (int x = 0; x < dout.width(); ++x)
            for (int c = 0; c < dout.channels(); ++c) din.at(y / 2, x / 2, c) += dout.at(y, x, c);
    return din;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height() != b.height() || a.width() != b.width())
        throw ContractError("concat_channels: spatial mismatch");
    Tensor out(a.height(), a.width(), a.channels() + b.channels());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            for (int c = 0; c < a.channels(); ++c) out.at(y, x, c) = a.at(y, x, c);
            for (int c = 0; c < b.channels(); ++c) out.at(y, x, a.channels() + c) = b.at(y, x, c);
        }
    return out;
}

void split_channels(const Tensor& dcat, int a_ch, Tensor& da, Tensor& db) {
    const int b_ch = dcat.channels() - a_ch;
    da = Tensor(dcat.height(), dcat.width(), a_ch);
    db = Tensor(dcat.height(), dcat.width(), b_ch);
    for (int y = 0; y < dcat.height(); ++y)
        for (int x = 0; x < dcat.width(); ++x) {
            for (int c = 0; c < a_ch; ++c) da.at(y, x, c) = dcat.at(y, x, c);
            for (int c = 0; c < b_ch; ++c) db.at(y, x, c) = dcat.at(y, x, a_ch + c);
        }
}

void AdamState::init_like(const std::vector<ConvLayer>& layers) {
    m_w.resize(layers.size());
    v_w.resize(layers.size());
    m_b.resize(layers.size());
    v_b.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        m_w[i].assign(layers[i].w.size(), 0.0);
        v_w[i].assign(layers[i].w.size(), 0.0);
        m_b[i].assign(layers[i].b.size(), 0.0);
        v_b[i].assign(layers[i].b.size(), 0.0);
    }
}

namespace {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, double lr, const AdamConfig& cfg, double bc1, double bc2) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace

void adam_step(std::vector<ConvLayer>& layers, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
    if (grads.dw.size() != layers.size() || state.m_w.size() != layers.size())
        throw ContractError("adam_step: mismatched layer roster");
    ++state.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        adam_update(layers[i].w, grads.dw[i], state.m_w[i], state.v_w[i], lr, cfg, bc1, bc2);
        adam_update(layers[i].b, grads.db[i], state.m_b[i], state.v_b[i], lr, cfg, bc1, bc2);
    }
}

void init_conv(ConvLayer& layer, Rng& rng) {
    double sd = std::sqrt(2.0 / (9.0 * layer.in_ch));
    for (double& v : layer.w) v = sd * rng.normal();
    for (double& v : layer.b) v = 0.0;
}

std::size_t param_count(const std::vector<ConvLayer>& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

std::vector<double> flatten_params(const std::vector<ConvLayer>& layers) {
    std::vector<double> flat;
    flat.reserve(param_count(layers));
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.w.begin(), l.w.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void set_params(std::vector<ConvLayer>& layers, std::span<const double> flat) {
    if (flat.size() != param_count(layers)) throw ContractError("set_params: size mismatch");
    std::size_t off = 0;
    for (auto& l : layers) {
        std::copy(flat.begin() + off, flat.begin() + off + l.w.size(), l.w.begin());
        off += l.w.size();
        std::copy(flat.begin() + off, flat.begin() + off + l.b.size(), l.b.begin());
        off += l.b.size();
    }
}

std::uint64_t params_digest(const std::vector<ConvLayer>& layers) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& l : layers) {
        h = fnv1a(l.w.data(), l.w.size() * sizeof(double), h);
        h = fnv1a(l.b.data(), l.b.size() * sizeof(double), h);
    }
    return h;
}

}  // namespace sfea
