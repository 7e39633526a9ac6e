#include "sfea/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace sfea {
namespace {

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
    const int h = src.height(), w = src.width(), ch = src.channels();
    Tensor out(out_h, out_w, ch);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
            for (int c = 0; c < ch; ++c) {
                double v = (1.0 - wy) * ((1.0 - wx) * src.at(y0c, x0c, c) + wx * src.at(y0c, x1c, c)) +
                           wy * ((1.0 - wx) * src.at(y1c, x0c, c) + wx * src.at(y1c, x1c, c));
                out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

std::vector<int> resize_nearest_labels(const MaskTensor& m, int out_h, int out_w) {
    std::vector<int> labels(static_cast<std::size_t>(out_h) * out_w);
    const double sy = static_cast<double>(m.height()) / out_h;
    const double sx = static_cast<double>(m.width()) / out_w;
    for (int y = 0; y < out_h; ++y) {
        int src_y = std::clamp(static_cast<int>((y + 0.5) * sy), 0, m.height() - 1);
        for (int x = 0; x < out_w; ++x) {
            int src_x = std::clamp(static_cast<int>((x + 0.5) * sx), 0, m.width() - 1);
            labels[static_cast<std::size_t>(y) * out_w + x] = m.label_at(src_y, src_x);
        }
    }
    return labels;
}

Tensor crop(const Tensor& src, int oy, int ox, int size) {
    Tensor out(size, size, src.channels());
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < src.channels(); ++c) out.at(y, x, c) = src.at(oy + y, ox + x, c);
    return out;
}

Tensor hflip(const Tensor& src) {
    Tensor out(src.height(), src.width(), src.channels());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (int c = 0; c < src.channels(); ++c)
                out.at(y, x, c) = src.at(y, src.width() - 1 - x, c);
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (depth < 2) throw ContractError("TrainConfig: depth must be >= 2");
    if (base_channels < 1) throw ContractError("TrainConfig: base_channels must be >= 1");
    if (num_classes < 2) throw ContractError("TrainConfig: num_classes must be >= 2");
    if (scale_set.empty()) throw ContractError("TrainConfig: scale_set is empty");
    int min_scale = *std::min_element(scale_set.begin(), scale_set.end());
    if (crop_size > min_scale)
        throw ContractError("TrainConfig: crop_size " + std::to_string(crop_size) +
                            " exceeds smallest scale " + std::to_string(min_scale));
    if (crop_size % (1 << (depth - 1)) != 0)
        throw ContractError("TrainConfig: crop_size must be divisible by " +
                            std::to_string(1 << (depth - 1)));
    if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be >= 1");
    if (epochs_flat < 0 || epochs_decay < 0) throw ContractError("TrainConfig: negative epoch counts");
    if (!(lr0 > 0.0)) throw ContractError("TrainConfig: lr0 must be > 0");
    if (lambda_s < 0.0) throw ContractError("TrainConfig: lambda_s must be >= 0");
}

double lr_schedule(const TrainConfig& cfg, int epoch) {
    if (epoch < cfg.epochs_flat) return cfg.lr0;
    int remaining = cfg.epochs_flat + cfg.epochs_decay - epoch;
    if (remaining <= 0) return 0.0;
    return cfg.lr0 * static_cast<double>(remaining) / static_cast<double>(cfg.epochs_decay);
}

int draw_scale(const TrainConfig& cfg, Rng& rng) {
    return cfg.scale_set[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(cfg.scale_set.size()) - 1))];
}

AugmentedSample augment(const ImageTensor& x, const ImageTensor& y, const MaskTensor& m,
                        const TrainConfig& cfg, Rng& rng) {
    const int scale = draw_scale(cfg, rng);

    Tensor xs = resize_bilinear(x.tensor(), scale, scale);
    Tensor ys = resize_bilinear(y.tensor(), scale, scale);
    std::vector<int> labels = resize_nearest_labels(m, scale, scale);

    const int oy = rng.uniform_int(0, scale - cfg.crop_size);
    const int ox = rng.uniform_int(0, scale - cfg.crop_size);
    Tensor xc = crop(xs, oy, ox, cfg.crop_size);
    Tensor yc = crop(ys, oy, ox, cfg.crop_size);
    std::vector<int> lc(static_cast<std::size_t>(cfg.crop_size) * cfg.crop_size);
    for (int yy = 0; yy < cfg.crop_size; ++yy)
        for (int xx = 0; xx < cfg.crop_size; ++xx)
            lc[static_cast<std::size_t>(yy) * cfg.crop_size + xx] =
                labels[static_cast<std::size_t>(oy + yy) * scale + (ox + xx)];

    if (rng.coin()) {
        xc = hflip(xc);
        yc = hflip(yc);
        std::vector<int> lf(lc.size());
        for (int yy = 0; yy < cfg.crop_size; ++yy)
            for (int xx = 0; xx < cfg.crop_size; ++xx)
                lf[static_cast<std::size_t>(yy) * cfg.crop_size + xx] =
                    lc[static_cast<std::size_t>(yy) * cfg.crop_size + (cfg.crop_size - 1 - xx)];
        lc = std::move(lf);
    }

    return AugmentedSample{ImageTensor(std::move(xc)), ImageTensor(std::move(yc)),
                           MaskTensor::from_labels(cfg.crop_size, cfg.crop_size,
                                                   m.num_classes(), lc)};
}

TrainResult train_source(const std::vector<SourceSample>& samples, const TrainConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw ContractError("train_source: no samples");
    for (const auto& s : samples)
        if (!s.x.same_shape(samples[0].x) || s.m.num_classes() != cfg.num_classes)
            throw ContractError("train_source: inconsistent sample shapes");

    EnhancerModel model =
        EnhancerModel::init(cfg.depth, cfg.base_channels, cfg.num_classes, cfg.seed);
    Rng shuffle_rng = Rng::forked(cfg.seed, 1);
    Rng augment_rng = Rng::forked(cfg.seed, 2);

    AdamState adam;
    adam.init_like(model.layers);
    Gradients grads;
    grads.init_like(model.layers);

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result{std::move(model), {}};
    const int total_epochs = cfg.epochs_flat + cfg.epochs_decay;
    for (int epoch = 0; epoch < total_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_schedule(cfg, epoch);

        // Fisher-Yates with the run's own stream keeps epochs reproducible.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(
                                        shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);

        double loss_sum = 0.0;
        long loss_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const SourceSample& s = samples[order[k]];
                AugmentedSample a = augment(s.x, s.y, s.m, cfg, augment_rng);
                LossParts parts =
                    loss_and_backward(result.model, a.x, a.y, a.m, cfg.lambda_s, grads);
                batch_loss += parts.total;
            }
            const double n = static_cast<double>(end - start);
            if (!std::isfinite(batch_loss))
                throw NumericError("train_source: non-finite loss at epoch " +
                                   std::to_string(epoch) + " batch " +
                                   std::to_string(start / cfg.batch_size));
            grads.scale(1.0 / n);
            adam_step(result.model.layers, grads, adam, lr, cfg.adam);
            loss_sum += batch_loss;
            loss_count += static_cast<long>(end - start);
        }

        auto t1 = std::chrono::steady_clock::now();
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.mean_loss = loss_sum / static_cast<double>(loss_count);
        log.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(log);
    }
    return result;
}

MetricReport evaluate_outputs(const std::function<EnhanceOutput(const ImageTensor&)>& fn,
                              const std::vector<SourceSample>& heldout) {
    if (heldout.empty()) throw ContractError("evaluate: empty held-out set");

    MetricReport report;
    report.n_samples = static_cast<int>(heldout.size());
    const int nc = heldout[0].m.num_classes();
    report.dice.assign(nc, 0.0);
    report.iou.assign(nc, 0.0);
    for (const auto& s : heldout) {
        EnhanceOutput out = fn(s.x);
        report.ssim += ssim(out.enhanced, s.y);
        report.psnr += psnr(out.enhanced, s.y);
        DiceIou di = dice_iou(out.mask_pred, s.m);
        for (int c = 0; c < nc; ++c) {
            report.dice[c] += di.dice[c];
            report.iou[c] += di.iou[c];
        }
    }
    const double n = static_cast<double>(heldout.size());
    report.ssim /= n;
    report.psnr /= n;
    for (int c = 0; c < nc; ++c) {
        report.dice[c] /= n;
        report.iou[c] /= n;
    }
    report.dice_mean = std::accumulate(report.dice.begin(), report.dice.end(), 0.0) / nc;
    report.iou_mean = std::accumulate(report.iou.begin(), report.iou.end(), 0.0) / nc;
    return report;
}

MetricReport evaluate_source(const EnhancerModel& model, const std::vector<SourceSample>& heldout) {
    return evaluate_outputs([&](const ImageTensor& x) { return forward(model, x); }, heldout);
}

}  // namespace sfea
