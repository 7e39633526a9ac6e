#include "sfea/enhancer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sfea {

EnhancerModel EnhancerModel::init(int depth, int base_channels, int num_classes,
                                  std::uint64_t seed) {
    if (depth < 2) throw ContractError("EnhancerModel: depth must be >= 2");
    if (base_channels < 1) throw ContractError("EnhancerModel: base_channels must be >= 1");
    if (num_classes < 2) throw ContractError("EnhancerModel: num_classes must be >= 2");

    EnhancerModel m;
    m.depth = depth;
    m.base_channels = base_channels;
    m.num_classes = num_classes;

    auto ch = [&](int i) { return base_channels << i; };
    for (int i = 0; i < depth; ++i) {
        m.layers.emplace_back(i == 0 ? 3 : ch(i - 1), ch(i));  // enc1[i]
        m.layers.emplace_back(ch(i), ch(i));                   // enc2[i]
    }
    for (int i = depth - 2; i >= 0; --i) {
        m.layers.emplace_back(ch(i + 1), ch(i));      // dec_up[i]
        m.layers.emplace_back(2 * ch(i), ch(i));      // dec_fuse[i]
    }
    m.layers.emplace_back(ch(depth - 1), ch(depth - 1));  // seg_lat
    for (int i = depth - 2; i >= 0; --i) {
        m.layers.emplace_back(ch(i + 1), ch(i));      // seg_up[i]
        m.layers.emplace_back(2 * ch(i), ch(i));      // seg_fuse[i]
    }
    m.layers.emplace_back(ch(0), 3);            // enh_head
    m.layers.emplace_back(ch(0), num_classes);  // seg_head

    Rng rng(seed);
    for (auto& layer : m.layers) init_conv(layer, rng);
    return m;
}

namespace {

// Everything the hand-written backward pass needs to replay the forward
// graph: conv inputs (im2col is recomputed) and pre-activation values.
struct Trace {
    std::vector<Tensor> enc_in, enc1_z, enc1_a, enc2_z, enc2_a;  // [depth]
    std::vector<Tensor> up_in, dec_up_z, cat_in, dec_fuse_z, dec_feat;  // [depth-1], level-indexed
    Tensor seg_lat_z, seg_lat_a;
    std::vector<Tensor> sup_in, seg_up_z, scat_in, seg_fuse_z, seg_feat;  // [depth-1]
    Tensor enhanced;  // post-sigmoid
    Tensor probs;     // post-softmax
};

void check_divisible(const EnhancerModel& model, const ImageTensor& x) {
    int mult = 1 << (model.depth - 1);
    if (x.height() % mult != 0 || x.width() % mult != 0)
        throw ContractError("forward: input " + x.tensor().shape_str() +
                            " must have spatial dims divisible by " + std::to_string(mult));
}

Trace forward_traced(const EnhancerModel& model, const ImageTensor& x) {
    check_divisible(model, x);
    const int d = model.depth;
    Trace t;
    t.enc_in.resize(d);
    t.enc1_z.resize(d);
    t.enc1_a.resize(d);
    t.enc2_z.resize(d);
    t.enc2_a.resize(d);
    t.up_in.resize(d - 1);
    t.dec_up_z.resize(d - 1);
    t.cat_in.resize(d - 1);
    t.dec_fuse_z.resize(d - 1);
    t.dec_feat.resize(d - 1);
    t.sup_in.resize(d - 1);
    t.seg_up_z.resize(d - 1);
    t.scat_in.resize(d - 1);
    t.seg_fuse_z.resize(d - 1);
    t.seg_feat.resize(d - 1);

    // Encoder: two convs per level, mean-pool between levels.
    Tensor cur = x.tensor();
    for (int i = 0; i < d; ++i) {
        t.enc_in[i] = std::move(cur);
        t.enc1_z[i] = conv_forward(model.layers[model.enc1_idx(i)], t.enc_in[i]);
        t.enc1_a[i] = silu(t.enc1_z[i]);
        t.enc2_z[i] = conv_forward(model.layers[model.enc2_idx(i)], t.enc1_a[i]);
        t.enc2_a[i] = silu(t.enc2_z[i]);
        if (i < d - 1) cur = avgpool2(t.enc2_a[i]);
    }

    // Image decoder: upsample, conv, concat the encoder skip, fuse.
    Tensor feat = t.enc2_a[d - 1];
    for (int i = d - 2; i >= 0; --i) {
        t.up_in[i] = upsample2(feat);
        t.dec_up_z[i] = conv_forward(model.layers[model.dec_up_idx(i)], t.up_in[i]);
        Tensor up_a = silu(t.dec_up_z[i]);
        t.cat_in[i] = concat_channels(up_a, t.enc2_a[i]);
        t.dec_fuse_z[i] = conv_forward(model.layers[model.dec_fuse_idx(i)], t.cat_in[i]);
        t.dec_feat[i] = silu(t.dec_fuse_z[i]);
        feat = t.dec_feat[i];
    }

    // Segmenter: own upsampling path, laterally fed by the decoder features.
    t.seg_lat_z = conv_forward(model.layers[model.seg_lat_idx()], t.enc2_a[d - 1]);
    t.seg_lat_a = silu(t.seg_lat_z);
    Tensor seg = t.seg_lat_a;
    for (int i = d - 2; i >= 0; --i) {
        t.sup_in[i] = upsample2(seg);
        t.seg_up_z[i] = conv_forward(model.layers[model.seg_up_idx(i)], t.sup_in[i]);
        Tensor su_a = silu(t.seg_up_z[i]);
        t.scat_in[i] = concat_channels(su_a, t.dec_feat[i]);
        t.seg_fuse_z[i] = conv_forward(model.layers[model.seg_fuse_idx(i)], t.scat_in[i]);
        t.seg_feat[i] = silu(t.seg_fuse_z[i]);
        seg = t.seg_feat[i];
    }

    t.enhanced = sigmoid(conv_forward(model.layers[model.enh_head_idx()], t.dec_feat[0]));
    t.probs = softmax_channels(conv_forward(model.layers[model.seg_head_idx()], t.seg_feat[0]));
    return t;
}

// Backward through the whole graph given gradients w.r.t. the enhanced image
// (post-sigmoid) and the segmentation logits (pre-softmax).
void backward_traced(const EnhancerModel& model, const Trace& t, const Tensor& d_enhanced,
                     const Tensor& d_seg_logits, Gradients& grads) {
    const int d = model.depth;

    Tensor dz_enh = sigmoid_backward_from_act(t.enhanced, d_enhanced);
    Tensor d_feat0_from_head =
        conv_backward(model.layers[model.enh_head_idx()], t.dec_feat[0], dz_enh, grads,
                      model.enh_head_idx());
    Tensor d_seg0 = conv_backward(model.layers[model.seg_head_idx()], t.seg_feat[0], d_seg_logits,
                                  grads, model.seg_head_idx());

    // Segmenter chain, level 0 upward; laterals feed the decoder below.
    std::vector<Tensor> d_dec_feat(d - 1);  // accumulated grads w.r.t. dec_feat[i]
    d_dec_feat[0] = std::move(d_feat0_from_head);
    Tensor d_seg_feat = std::move(d_seg0);
    Tensor d_bottleneck_from_seg;
    for (int i = 0; i <= d - 2; ++i) {
        Tensor dz = silu_backward(t.seg_fuse_z[i], d_seg_feat);
        Tensor dcat = conv_backward(model.layers[model.seg_fuse_idx(i)], t.scat_in[i], dz, grads,
                                    model.seg_fuse_idx(i));
        Tensor d_su_a, d_lat;
        split_channels(dcat, model.ch(i), d_su_a, d_lat);
        if (d_dec_feat[i].empty())
            d_dec_feat[i] = std::move(d_lat);
        else
            for (std::size_t j = 0; j < d_lat.size(); ++j) d_dec_feat[i].values()[j] += d_lat.values()[j];

        Tensor dz_up = silu_backward(t.seg_up_z[i], d_su_a);
        Tensor d_sup = conv_backward(model.layers[model.seg_up_idx(i)], t.sup_in[i], dz_up, grads,
                                     model.seg_up_idx(i));
        Tensor d_prev = upsample2_backward(d_sup);
        if (i == d - 2)
            d_bottleneck_from_seg = std::move(d_prev);
        else
            d_seg_feat = std::move(d_prev);
    }
    {
        Tensor dz = silu_backward(t.seg_lat_z, d_bottleneck_from_seg);
        d_bottleneck_from_seg = conv_backward(model.layers[model.seg_lat_idx()], t.enc2_a[d - 1],
                                              dz, grads, model.seg_lat_idx());
    }

    // Image decoder chain, level 0 upward; produces skip grads for the
    // encoder and the gradient w.r.t. the bottleneck.
    std::vector<Tensor> d_enc2_a(d);
    Tensor d_up_path;  // grad w.r.t. the feature feeding level i's upsample
    for (int i = 0; i <= d - 2; ++i) {
        Tensor dz = silu_backward(t.dec_fuse_z[i], d_dec_feat[i]);
        Tensor dcat = conv_backward(model.layers[model.dec_fuse_idx(i)], t.cat_in[i], dz, grads,
                                    model.dec_fuse_idx(i));
        Tensor d_up_a, d_skip;
        split_channels(dcat, model.ch(i), d_up_a, d_skip);
        d_enc2_a[i] = std::move(d_skip);

        Tensor dz_up = silu_backward(t.dec_up_z[i], d_up_a);
        Tensor d_upin = conv_backward(model.layers[model.dec_up_idx(i)], t.up_in[i], dz_up, grads,
                                      model.dec_up_idx(i));
        d_up_path = upsample2_backward(d_upin);
        if (i < d - 2)
            for (std::size_t j = 0; j < d_up_path.size(); ++j)
                d_dec_feat[i + 1].values()[j] += d_up_path.values()[j];
    }

    // Bottleneck receives the decoder's top-most up path plus the segmenter
    // lateral stem.
    d_enc2_a[d - 1] = std::move(d_up_path);
    for (std::size_t j = 0; j < d_bottleneck_from_seg.size(); ++j)
        d_enc2_a[d - 1].values()[j] += d_bottleneck_from_seg.values()[j];

    // Encoder chain, deepest level down to the input.
    for (int i = d - 1; i >= 0; --i) {
        Tensor dz2 = silu_backward(t.enc2_z[i], d_enc2_a[i]);
        Tensor d_enc1_a = conv_backward(model.layers[model.enc2_idx(i)], t.enc1_a[i], dz2, grads,
                                        model.enc2_idx(i));
        Tensor dz1 = silu_backward(t.enc1_z[i], d_enc1_a);
        Tensor d_in = conv_backward(model.layers[model.enc1_idx(i)], t.enc_in[i], dz1, grads,
                                    model.enc1_idx(i));
        if (i > 0) {
            Tensor d_pool = avgpool2_backward(t.enc2_a[i - 1].height(), t.enc2_a[i - 1].width(), d_in);
            for (std::size_t j = 0; j < d_pool.size(); ++j) d_enc2_a[i - 1].values()[j] += d_pool.values()[j];
        }
    }
}

}  // namespace

EnhanceOutput forward(const EnhancerModel& model, const ImageTensor& x) {
    Trace t = forward_traced(model, x);
    return EnhanceOutput{ImageTensor(std::move(t.enhanced)),
                         MaskTensor(std::move(t.probs), MaskKind::Predicted)};
}

double loss_enhance(const ImageTensor& pred, const ImageTensor& target) {
    if (!pred.same_shape(target)) throw ContractError("loss_enhance: shape mismatch");
    auto p = pred.tensor().values();
    auto t = target.tensor().values();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - t[i]);
    return total / static_cast<double>(p.size());
}

double loss_structure(const MaskTensor& pred, const MaskTensor& target) {
    if (pred.kind() != MaskKind::Predicted)
        throw ContractError("loss_structure: pred must be a probability mask");
    if (target.kind() != MaskKind::GroundTruth)
        throw ContractError("loss_structure: target must be a one-hot mask");
    if (!pred.same_shape(target)) throw ContractError("loss_structure: shape mismatch");

    const int nc = pred.num_classes();
    const std::size_t pixels = pred.tensor().size() / nc;
    const double* pp = pred.tensor().data();
    const double* tt = target.tensor().data();
    double total = 0.0;
    for (std::size_t px = 0; px < pixels; ++px)
        for (int c = 0; c < nc; ++c) {
            if (tt[px * nc + c] == 0.0) continue;
            double prob = std::clamp(pp[px * nc + c], 1e-7, 1.0);
            total -= tt[px * nc + c] * std::log(prob);
        }
    return total / static_cast<double>(pixels);
}

double loss_source(const EnhanceOutput& out, const ImageTensor& y, const MaskTensor& m,
                   double lambda_s) {
    if (lambda_s < 0.0) throw ContractError("loss_source: lambda_s must be >= 0");
    return loss_enhance(out.enhanced, y) + lambda_s * loss_structure(out.mask_pred, m);
}

LossParts loss_and_backward(const EnhancerModel& model, const ImageTensor& x,
                            const ImageTensor& y, const MaskTensor& m, double lambda,
                            Gradients& grads) {
    if (lambda < 0.0) throw ContractError("loss_and_backward: lambda must be >= 0");
    if (m.kind() != MaskKind::GroundTruth)
        throw ContractError("loss_and_backward: target mask must be one-hot");
    if (!y.same_shape(x)) throw ContractError("loss_and_backward: target image shape mismatch");
    if (m.height() != x.height() || m.width() != x.width() || m.num_classes() != model.num_classes)
        throw ContractError("loss_and_backward: target mask shape mismatch");
    Trace t = forward_traced(model, x);

    LossParts parts;
    const std::size_t ne = t.enhanced.size();
    Tensor d_enh(t.enhanced.height(), t.enhanced.width(), 3);
    {
        auto pv = t.enhanced.values();
        auto yv = y.tensor().values();
        double total = 0.0;
        for (std::size_t i = 0; i < ne; ++i) {
            double diff = pv[i] - yv[i];
            total += std::abs(diff);
            d_enh.values()[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / static_cast<double>(ne);
        }
        parts.enhance = total / static_cast<double>(ne);
    }

    const int nc = model.num_classes;
    const std::size_t pixels = t.probs.size() / nc;
    Tensor d_logits(t.probs.height(), t.probs.width(), nc);
    {
        const double* pp = t.probs.data();
        const double* tt = m.tensor().data();
        double total = 0.0;
        // Softmax + cross-entropy folded: d(loss)/d(logit) = (p - t) / pixels.
        // The 1e-7 clamp below only guards the log; it never binds at the
        // operating points training visits, so the fold stays exact there.
        for (std::size_t i = 0; i < t.probs.size(); ++i)
            d_logits.values()[i] = lambda * (pp[i] - tt[i]) / static_cast<double>(pixels);
        for (std::size_t px = 0; px < pixels; ++px)
            for (int c = 0; c < nc; ++c) {
                if (tt[px * nc + c] == 0.0) continue;
                total -= tt[px * nc + c] * std::log(std::clamp(pp[px * nc + c], 1e-7, 1.0));
            }
        parts.structure = total / static_cast<double>(pixels);
    }

    parts.total = parts.enhance + lambda * parts.structure;
    backward_traced(model, t, d_enh, d_logits, grads);
    return parts;
}

void ema_update(EnhancerModel& teacher, const EnhancerModel& student, double decay) {
    if (!(decay >= 0.0 && decay <= 1.0)) throw ContractError("ema_update: decay must be in [0,1]");
    if (!teacher.same_arch(student) || teacher.layers.size() != student.layers.size())
        throw ContractError("ema_update: architecture mismatch");
    if (decay == 1.0) return;
    for (std::size_t i = 0; i < teacher.layers.size(); ++i) {
        auto& tw = teacher.layers[i];
        const auto& sw = student.layers[i];
        if (tw.w.size() != sw.w.size() || tw.b.size() != sw.b.size())
            throw ContractError("ema_update: parameter shape mismatch");
        if (decay == 0.0) {
            tw.w = sw.w;
            tw.b = sw.b;
            continue;
        }
        for (std::size_t j = 0; j < tw.w.size(); ++j)
            tw.w[j] = decay * tw.w[j] + (1.0 - decay) * sw.w[j];
        for (std::size_t j = 0; j < tw.b.size(); ++j)
            tw.b[j] = decay * tw.b[j] + (1.0 - decay) * sw.b[j];
    }
}

}  // namespace sfea
