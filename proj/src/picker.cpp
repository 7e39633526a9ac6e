#include "sfea/picker.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sfea/checkpoint.hpp"

namespace sfea {
namespace {

constexpr char kPickerMagic[9] = "SFEAPICK";

void check_threshold(double tau, const char* name) {
    if (!(tau > 0.0 && tau < 1.0))
        throw ContractError(std::string(name) + " must lie in (0,1)");
}

// Saved activations for one scorer forward pass.
struct ScorerTrace {
    Tensor input{1, 1, 1};
    std::vector<Tensor> pre, act, pooled;
    Tensor gmean{1, 1, 1};
    double logit = 0.0;
    double s = 0.0;
};

Tensor crop_to_multiple(const Tensor& in, int mult) {
    int h = in.height() - in.height() % mult;
    int w = in.width() - in.width() % mult;
    if (h < mult || w < mult)
        throw ContractError("scorer input " + in.shape_str() + " is smaller than its " +
                            std::to_string(mult) + "x downsampling factor");
    if (h == in.height() && w == in.width()) return in;
    Tensor out(h, w, in.channels());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < in.channels(); ++c) out.at(y, x, c) = in.at(y, x, c);
    return out;
}

double scorer_forward(const SmallCnn& net, const Tensor& in, ScorerTrace* trace) {
    Tensor cur = crop_to_multiple(in, 1 << net.stages);
    if (trace) trace->input = cur;
    for (int i = 0; i < net.stages; ++i) {
        Tensor pre = conv_forward(net.layers[i], cur);
        Tensor act = silu(pre);
        Tensor pooled = avgpool2(act);
        if (trace) {
            trace->pre.push_back(pre);
            trace->act.push_back(act);
            trace->pooled.push_back(pooled);
        }
        cur = std::move(pooled);
    }
    Tensor gmean(1, 1, cur.channels());
    double inv = 1.0 / (static_cast<double>(cur.height()) * cur.width());
    for (int y = 0; y < cur.height(); ++y)
        for (int x = 0; x < cur.width(); ++x)
            for (int c = 0; c < cur.channels(); ++c) gmean.at(0, 0, c) += cur.at(y, x, c) * inv;
    Tensor head = conv_forward(net.layers[net.stages], gmean);
    double logit = head.at(0, 0, 0);
    if (!std::isfinite(logit)) throw NumericError("non-finite scorer logit");
    double s = 1.0 / (1.0 + std::exp(-logit));
    if (trace) {
        trace->gmean = std::move(gmean);
        trace->logit = logit;
        trace->s = s;
    }
    return s;
}

// Backpropagates d(loss)/d(logit); optionally returns d(loss)/d(input).
void scorer_backward(const SmallCnn& net, const ScorerTrace& trace, double dlogit,
                     Gradients& grads, Tensor* din_out) {
    Tensor dhead(1, 1, 1);
    dhead.at(0, 0, 0) = dlogit;
    Tensor dgmean = conv_backward(net.layers[net.stages], trace.gmean, dhead, grads, net.stages);

    const Tensor& last = trace.pooled.back();
    Tensor dcur(last.height(), last.width(), last.channels());
    double inv = 1.0 / (static_cast<double>(last.height()) * last.width());
    for (int y = 0; y < last.height(); ++y)
        for (int x = 0; x < last.width(); ++x)
            for (int c = 0; c < last.channels(); ++c) dcur.at(y, x, c) = dgmean.at(0, 0, c) * inv;

    for (int i = net.stages - 1; i >= 0; --i) {
        Tensor dact = avgpool2_backward(trace.act[i].height(), trace.act[i].width(), dcur);
        Tensor dpre = silu_backward(trace.pre[i], dact);
        const Tensor& in = (i == 0) ? trace.input : trace.pooled[i - 1];
        dcur = conv_backward(net.layers[i], in, dpre, grads, i);
    }
    if (din_out) *din_out = std::move(dcur);
}

// One-hot draw from the decoder's per-pixel distribution. Sampling (rather
// than argmax) is what keeps the detector honest: while the generator is
// still soft its samples are noisy, so the detector sees high-frequency
// garbage labeled fake instead of only smooth blobs.
Tensor sample_onehot(const Tensor& probs, Rng& rng) {
    Tensor out(probs.height(), probs.width(), probs.channels());
    for (int y = 0; y < probs.height(); ++y)
        for (int x = 0; x < probs.width(); ++x) {
            double u = rng.uniform();
            int c = 0;
            for (; c < probs.channels() - 1; ++c) {
                u -= probs.at(y, x, c);
                if (u <= 0.0) break;
            }
            out.at(y, x, c) = 1.0;
        }
    return out;
}

double median_of(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

// Score calibration shared by both gates. A small classifier's logit scale
// drifts run to run (and a discriminator's equilibrium can sit anywhere), so
// a fixed threshold on the raw sigmoid is arbitrary. Shifting the head bias
// so the midpoint between the class median logits maps to score 0.5 makes
// the default threshold the actual class boundary; the shift is monotone, so
// rankings and any score-ordering properties are unchanged.
void center_boundary(SmallCnn& net, const std::vector<double>& pos_logits,
                     const std::vector<double>& neg_logits) {
    net.layers[net.stages].b[0] -= 0.5 * (median_of(pos_logits) + median_of(neg_logits));
}

// d(loss)/d(logits) for p = softmax(logits) given g = d(loss)/d(p).
Tensor softmax_vjp(const Tensor& p, const Tensor& g) {
    Tensor dz(p.height(), p.width(), p.channels());
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x) {
            double dot = 0.0;
            for (int c = 0; c < p.channels(); ++c) dot += g.at(y, x, c) * p.at(y, x, c);
            for (int c = 0; c < p.channels(); ++c)
                dz.at(y, x, c) = p.at(y, x, c) * (g.at(y, x, c) - dot);
        }
    return dz;
}

}  // namespace

SmallCnn SmallCnn::init(int in_ch, int base_channels, int stages, std::uint64_t seed) {
    if (in_ch < 1 || base_channels < 1 || stages < 1)
        throw ContractError("scorer architecture fields must be positive");
    SmallCnn net;
    net.in_ch = in_ch;
    net.base_channels = base_channels;
    net.stages = stages;
    Rng rng(seed);
    for (int i = 0; i < stages; ++i) {
        net.layers.emplace_back(i == 0 ? in_ch : base_channels << (i - 1), base_channels << i);
        init_conv(net.layers.back(), rng);
    }
    net.layers.emplace_back(base_channels << (stages - 1), 1);
    init_conv(net.layers.back(), rng);
    return net;
}

double SmallCnn::score(const Tensor& in) const {
    if (in.channels() != in_ch)
        throw ContractError("scorer expects " + std::to_string(in_ch) + " channels, got " +
                            in.shape_str());
    return scorer_forward(*this, in, nullptr);
}

std::uint64_t SmallCnn::digest() const {
    int arch[3] = {in_ch, base_channels, stages};
    std::uint64_t h = fnv1a(arch, sizeof(arch));
    auto flat = flatten_params(layers);
    return digest_doubles(flat, h);
}

double QualityAssessor::score(const ImageTensor& x) const { return net.score(x.tensor()); }

double StructureDetector::score(const MaskTensor& m) const {
    if (m.kind() == MaskKind::Predicted) return net.score(m.argmax_onehot().tensor());
    return net.score(m.tensor());
}

std::uint64_t Picker::digest() const {
    double taus[2] = {iqa.tau_q, isd.tau_s};
    std::uint64_t h = digest_doubles(taus);
    h = fnv1a(&h, sizeof(h), iqa.net.digest());
    return fnv1a(&h, sizeof(h), isd.net.digest());
}

QualityAssessor train_iqa(const std::vector<std::pair<ImageTensor, int>>& labeled,
                          const IqaTrainConfig& cfg) {
    if (labeled.empty()) throw ContractError("quality training set is empty");
    bool has0 = false, has1 = false;
    for (const auto& [x, q] : labeled) {
        if (q != 0 && q != 1) throw ContractError("quality labels must be 0 or 1");
        (q ? has1 : has0) = true;
    }
    if (!has0 || !has1)
        throw ContractError("quality training needs both labels present; got a single class");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0))
        throw ContractError("quality training config must have positive epochs, batch, lr");
    check_threshold(cfg.tau_q, "tau_q");

    SmallCnn net = SmallCnn::init(3, cfg.base_channels, cfg.stages, cfg.seed);
    Gradients grads;
    grads.init_like(net.layers);
    AdamState adam;
    adam.init_like(net.layers);
    Rng shuffle_rng = Rng::forked(cfg.seed, 1);

    std::vector<std::size_t> order(labeled.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            for (std::size_t k = start; k < end; ++k) {
                const auto& [x, q] = labeled[order[k]];
                ScorerTrace trace;
                scorer_forward(net, x.tensor(), &trace);
                scorer_backward(net, trace, trace.s - q, grads, nullptr);
            }
            grads.scale(1.0 / static_cast<double>(end - start));
            adam_step(net.layers, grads, adam, cfg.lr, cfg.adam);
        }
    }

    std::vector<double> pos, neg;
    for (const auto& [x, q] : labeled) {
        ScorerTrace trace;
        scorer_forward(net, x.tensor(), &trace);
        (q ? pos : neg).push_back(trace.logit);
    }
    center_boundary(net, pos, neg);
    return QualityAssessor{std::move(net), cfg.tau_q};
}

namespace {

// Convolutional VAE used only inside train_isd. The encoder is a scorer-style
// body (its scalar head stays untrained) plus mean and log-variance heads on
// the pooled feature; the decoder grows a 1x1 latent tensor back to SxS by
// repeated upsample+conv.
struct VaeNets {
    SmallCnn enc_body;
    std::vector<ConvLayer> heads;  // [0] mean, [1] log-variance
    std::vector<ConvLayer> dec;
    int latent = 0;
};

struct DecTrace {
    std::vector<Tensor> up, pre, act;  // per level; act.back() is pre-logits input
    Tensor logits{1, 1, 1};
};

Tensor decoder_forward(const VaeNets& v, const Tensor& z, DecTrace* trace) {
    Tensor cur = z;
    int levels = static_cast<int>(v.dec.size()) - 1;
    for (int i = 0; i < levels; ++i) {
        Tensor up = upsample2(cur);
        Tensor pre = conv_forward(v.dec[i], up);
        Tensor act = silu(pre);
        if (trace) {
            trace->up.push_back(up);
            trace->pre.push_back(pre);
            trace->act.push_back(act);
        }
        cur = std::move(act);
    }
    Tensor logits = conv_forward(v.dec.back(), cur);
    if (trace) trace->logits = logits;
    return logits;
}

// Backpropagates d(loss)/d(logits) through the decoder; returns d(loss)/dz.
Tensor decoder_backward(const VaeNets& v, const Tensor& z, const DecTrace& trace,
                        const Tensor& dlogits, Gradients& gdec) {
    int levels = static_cast<int>(v.dec.size()) - 1;
    const Tensor& head_in = levels > 0 ? trace.act.back() : z;
    Tensor dcur = conv_backward(v.dec.back(), head_in, dlogits, gdec, levels);
    for (int i = levels - 1; i >= 0; --i) {
        Tensor dpre = silu_backward(trace.pre[i], dcur);
        Tensor dup = conv_backward(v.dec[i], trace.up[i], dpre, gdec, i);
        dcur = upsample2_backward(dup);
    }
    return dcur;
}

}  // namespace

StructureDetector train_isd(const std::vector<MaskTensor>& masks, const IsdTrainConfig& cfg) {
    if (masks.size() < 8)
        throw ContractError("structure training needs at least 8 masks, got " +
                            std::to_string(masks.size()));
    const Tensor& first = masks.front().tensor();
    int side = first.height(), classes = first.channels();
    if (side != first.width() || side < 16 || (side & (side - 1)) != 0)
        throw ContractError("structure training masks must be square with a power-of-two side of at least 16");
    for (const auto& m : masks) {
        if (m.kind() != MaskKind::GroundTruth)
            throw ContractError("structure training masks must be ground-truth one-hot");
        if (!m.tensor().same_shape(first))
            throw ContractError("structure training masks must share one shape");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0) || cfg.latent_dim < 1 ||
        cfg.decoder_channels < 1 || cfg.beta_kl < 0.0 || cfg.adv_weight < 0.0)
        throw ContractError("structure training config has out-of-range fields");
    check_threshold(cfg.tau_s, "tau_s");

    SmallCnn d_net = SmallCnn::init(classes, cfg.base_channels, cfg.stages, Rng::forked(cfg.seed, 1).next_u64());

    VaeNets vae;
    vae.latent = cfg.latent_dim;
    vae.enc_body = SmallCnn::init(classes, cfg.base_channels, cfg.stages, Rng::forked(cfg.seed, 2).next_u64());
    Rng head_rng = Rng::forked(cfg.seed, 3);
    int feat = cfg.base_channels << (cfg.stages - 1);
    vae.heads.emplace_back(feat, cfg.latent_dim);
    vae.heads.emplace_back(feat, cfg.latent_dim);
    init_conv(vae.heads[0], head_rng);
    init_conv(vae.heads[1], head_rng);
    int ups = 0;
    while ((1 << ups) < side) ++ups;
    for (int i = 0; i < ups; ++i) {
        vae.dec.emplace_back(i == 0 ? cfg.latent_dim : cfg.decoder_channels, cfg.decoder_channels);
        init_conv(vae.dec.back(), head_rng);
    }
    vae.dec.emplace_back(cfg.decoder_channels, classes);
    init_conv(vae.dec.back(), head_rng);

    Gradients gbody, gheads, gdec, gd, scratch;
    gbody.init_like(vae.enc_body.layers);
    gheads.init_like(vae.heads);
    gdec.init_like(vae.dec);
    gd.init_like(d_net.layers);
    scratch.init_like(d_net.layers);
    AdamState adam_body, adam_heads, adam_dec, adam_d;
    adam_body.init_like(vae.enc_body.layers);
    adam_heads.init_like(vae.heads);
    adam_dec.init_like(vae.dec);
    adam_d.init_like(d_net.layers);

    Rng shuffle_rng = Rng::forked(cfg.seed, 4);
    Rng eps_rng = Rng::forked(cfg.seed, 5);
    Rng sample_rng = Rng::forked(cfg.seed, 6);

    double hw = static_cast<double>(side) * side;
    std::vector<std::size_t> order(masks.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            double bn = static_cast<double>(end - start);
            gbody.zero();
            gheads.zero();
            gdec.zero();
            gd.zero();
            std::vector<Tensor> fakes;  // re-one-hotted latent samples for the D step

            for (std::size_t k = start; k < end; ++k) {
                const Tensor& m = masks[order[k]].tensor();

                // Reconstruction + KL through the posterior sample.
                ScorerTrace enc_trace;
                scorer_forward(vae.enc_body, m, &enc_trace);
                Tensor mu = conv_forward(vae.heads[0], enc_trace.gmean);
                Tensor lv = conv_forward(vae.heads[1], enc_trace.gmean);
                Tensor z(1, 1, vae.latent);
                std::vector<double> eps(vae.latent);
                for (int j = 0; j < vae.latent; ++j) {
                    eps[j] = eps_rng.normal();
                    z.at(0, 0, j) = mu.at(0, 0, j) + std::exp(0.5 * lv.at(0, 0, j)) * eps[j];
                }
                DecTrace dec_trace;
                Tensor logits = decoder_forward(vae, z, &dec_trace);
                Tensor p = softmax_channels(logits);
                fakes.push_back(sample_onehot(p, sample_rng));

                Tensor dlogits(side, side, classes);
                double recon = 0.0;
                for (int y = 0; y < side; ++y)
                    for (int x = 0; x < side; ++x)
                        for (int c = 0; c < classes; ++c) {
                            double t = m.at(y, x, c);
                            double pc = p.at(y, x, c);
                            if (t > 0.0) recon -= std::log(std::max(pc, 1e-7));
                            dlogits.at(y, x, c) = (pc - t) / hw;
                        }
                recon /= hw;
                if (!std::isfinite(recon)) throw NumericError("non-finite generator loss");

                // Fool-the-detector term rides on the same soft output; its
                // re-one-hot copy above becomes the detector's fake.
                if (cfg.adv_weight > 0.0) {
                    ScorerTrace d_trace;
                    scorer_forward(d_net, p, &d_trace);
                    scratch.zero();
                    Tensor dp;
                    scorer_backward(d_net, d_trace, cfg.adv_weight * (d_trace.s - 1.0), scratch, &dp);
                    Tensor dadv = softmax_vjp(p, dp);
                    for (int y = 0; y < side; ++y)
                        for (int x = 0; x < side; ++x)
                            for (int c = 0; c < classes; ++c)
                                dlogits.at(y, x, c) += dadv.at(y, x, c);
                }
                Tensor dz = decoder_backward(vae, z, dec_trace, dlogits, gdec);

                Tensor dmu(1, 1, vae.latent), dlv(1, 1, vae.latent);
                double inv_l = 1.0 / vae.latent;
                for (int j = 0; j < vae.latent; ++j) {
                    double g = dz.at(0, 0, j);
                    dmu.at(0, 0, j) = g + cfg.beta_kl * mu.at(0, 0, j) * inv_l;
                    dlv.at(0, 0, j) = g * eps[j] * 0.5 * std::exp(0.5 * lv.at(0, 0, j)) +
                                      cfg.beta_kl * (std::exp(lv.at(0, 0, j)) - 1.0) * 0.5 * inv_l;
                }
                Tensor dgmean = conv_backward(vae.heads[0], enc_trace.gmean, dmu, gheads, 0);
                Tensor dgmean2 = conv_backward(vae.heads[1], enc_trace.gmean, dlv, gheads, 1);
                const Tensor& last = enc_trace.pooled.back();
                Tensor dcur(last.height(), last.width(), last.channels());
                double inv_sp = 1.0 / (static_cast<double>(last.height()) * last.width());
                for (int y = 0; y < last.height(); ++y)
                    for (int x = 0; x < last.width(); ++x)
                        for (int c = 0; c < last.channels(); ++c)
                            dcur.at(y, x, c) =
                                (dgmean.at(0, 0, c) + dgmean2.at(0, 0, c)) * inv_sp;
                for (int i2 = cfg.stages - 1; i2 >= 0; --i2) {
                    Tensor dact = avgpool2_backward(enc_trace.act[i2].height(),
                                                    enc_trace.act[i2].width(), dcur);
                    Tensor dpre = silu_backward(enc_trace.pre[i2], dact);
                    const Tensor& in = (i2 == 0) ? enc_trace.input : enc_trace.pooled[i2 - 1];
                    dcur = conv_backward(vae.enc_body.layers[i2], in, dpre, gbody, i2);
                }

            }

            gbody.scale(1.0 / bn);
            gheads.scale(1.0 / bn);
            gdec.scale(1.0 / bn);
            adam_step(vae.enc_body.layers, gbody, adam_body, cfg.lr, cfg.adam);
            adam_step(vae.heads, gheads, adam_heads, cfg.lr, cfg.adam);
            adam_step(vae.dec, gdec, adam_dec, cfg.lr, cfg.adam);

            // Detector step: real one-hot masks against the re-one-hotted
            // generator outputs collected above.
            for (std::size_t k = start; k < end; ++k) {
                ScorerTrace real_trace;
                scorer_forward(d_net, masks[order[k]].tensor(), &real_trace);
                scorer_backward(d_net, real_trace, real_trace.s - 1.0, gd, nullptr);
                ScorerTrace fake_trace;
                scorer_forward(d_net, fakes[k - start], &fake_trace);
                scorer_backward(d_net, fake_trace, fake_trace.s, gd, nullptr);
            }
            gd.scale(1.0 / bn);
            adam_step(d_net.layers, gd, adam_d, cfg.lr, cfg.adam);
        }
    }

    // Calibration fakes replay the training path: posterior samples of the
    // training masks, decoded and re-one-hotted.
    std::vector<double> real_l, fake_l;
    for (const auto& m : masks) {
        ScorerTrace real_trace;
        scorer_forward(d_net, m.tensor(), &real_trace);
        real_l.push_back(real_trace.logit);

        ScorerTrace enc_trace;
        scorer_forward(vae.enc_body, m.tensor(), &enc_trace);
        Tensor mu = conv_forward(vae.heads[0], enc_trace.gmean);
        Tensor lv = conv_forward(vae.heads[1], enc_trace.gmean);
        Tensor z(1, 1, vae.latent);
        for (int j = 0; j < vae.latent; ++j)
            z.at(0, 0, j) = mu.at(0, 0, j) + std::exp(0.5 * lv.at(0, 0, j)) * eps_rng.normal();
        Tensor p = softmax_channels(decoder_forward(vae, z, nullptr));
        ScorerTrace fake_trace;
        scorer_forward(d_net, sample_onehot(p, sample_rng), &fake_trace);
        fake_l.push_back(fake_trace.logit);
    }
    center_boundary(d_net, real_l, fake_l);
    return StructureDetector{std::move(d_net), cfg.tau_s};
}

PickVerdict pick(const Picker& picker, const ImageTensor& y_alpha, const MaskTensor& m_alpha) {
    PickVerdict v;
    v.quality_score = picker.iqa.score(y_alpha);
    v.structure_score = picker.isd.score(m_alpha);
    v.picked = v.quality_score >= picker.iqa.tau_q && v.structure_score >= picker.isd.tau_s;
    return v;
}

void save_picker(const Picker& picker, const std::string& path, std::uint64_t seed) {
    check_threshold(picker.iqa.tau_q, "tau_q");
    check_threshold(picker.isd.tau_s, "tau_s");
    const SmallCnn& a = picker.iqa.net;
    const SmallCnn& d = picker.isd.net;
    std::vector<double> params{picker.iqa.tau_q, picker.isd.tau_s};
    auto a_flat = flatten_params(a.layers);
    auto d_flat = flatten_params(d.layers);
    params.insert(params.end(), a_flat.begin(), a_flat.end());
    params.insert(params.end(), d_flat.begin(), d_flat.end());
    write_blob(path, kPickerMagic,
               {a.in_ch, a.base_channels, a.stages, d.in_ch, d.base_channels, d.stages}, params);

    nlohmann::json j{{"format_version", 1},
                     {"tau_q", picker.iqa.tau_q},
                     {"tau_s", picker.isd.tau_s},
                     {"iqa", {{"in_ch", a.in_ch}, {"base_channels", a.base_channels}, {"stages", a.stages}}},
                     {"isd", {{"in_ch", d.in_ch}, {"base_channels", d.base_channels}, {"stages", d.stages}}},
                     {"seed", seed}};
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw DataError("cannot write checkpoint sidecar: " + path + ".json");
    side << j.dump(2) << "\n";
}

Picker load_picker(const std::string& path) {
    Blob blob = read_blob(path, kPickerMagic, 6);
    for (int h : blob.header)
        if (h < 1 || h > 1 << 16)
            throw DataError("checkpoint format: implausible architecture field in " + path);
    Picker p;
    p.iqa.net = SmallCnn::init(blob.header[0], blob.header[1], blob.header[2], 0);
    p.isd.net = SmallCnn::init(blob.header[3], blob.header[4], blob.header[5], 0);
    std::size_t na = param_count(p.iqa.net.layers), nd = param_count(p.isd.net.layers);
    if (blob.params.size() != 2 + na + nd)
        throw DataError("checkpoint format: parameter count mismatch in " + path);
    p.iqa.tau_q = blob.params[0];
    p.isd.tau_s = blob.params[1];
    if (!(p.iqa.tau_q > 0.0 && p.iqa.tau_q < 1.0) || !(p.isd.tau_s > 0.0 && p.isd.tau_s < 1.0))
        throw DataError("checkpoint format: thresholds out of range in " + path);
    set_params(p.iqa.net.layers, std::span<const double>(blob.params).subspan(2, na));
    set_params(p.isd.net.layers, std::span<const double>(blob.params).subspan(2 + na, nd));

    std::ifstream side(path + ".json");
    if (!side) throw DataError("missing checkpoint sidecar: " + path + ".json");
    nlohmann::json j;
    try {
        side >> j;
    } catch (const nlohmann::json::exception&) {
        throw DataError("corrupt checkpoint sidecar: " + path + ".json");
    }
    try {
        if (j.at("iqa").at("in_ch").get<int>() != p.iqa.net.in_ch ||
            j.at("isd").at("in_ch").get<int>() != p.isd.net.in_ch ||
            j.at("iqa").at("stages").get<int>() != p.iqa.net.stages ||
            j.at("isd").at("stages").get<int>() != p.isd.net.stages)
            throw DataError("checkpoint sidecar disagrees with archive: " + path);
    } catch (const nlohmann::json::exception&) {
        throw DataError("checkpoint sidecar missing fields: " + path + ".json");
    }
    return p;
}

}  // namespace sfea
