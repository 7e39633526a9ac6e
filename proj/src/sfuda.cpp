#include "sfea/sfuda.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sfea/metrics.hpp"

namespace sfea {

TeacherStudent TeacherStudent::from_source(const EnhancerModel& source, double ema_decay) {
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0))
        throw ContractError("ema decay must lie in [0,1]");
    return TeacherStudent{source, source, ema_decay};
}

void PerturbConfig::validate() const {
    if (brightness_delta < 0.0 || contrast_range < 0.0 || color_jitter < 0.0)
        throw ContractError("perturbation magnitudes must be nonnegative");
    if (contrast_range >= 1.0)
        throw ContractError("contrast range must stay below 1 so factors stay positive");
}

ImageTensor perturb_apply(const ImageTensor& x, double brightness, double contrast,
                          const std::array<double, 3>& color) {
    if (brightness == 0.0 && contrast == 1.0 && color == std::array<double, 3>{0.0, 0.0, 0.0})
        return x;
    const Tensor& in = x.tensor();
    Tensor out(in.height(), in.width(), 3);
    for (int y = 0; y < in.height(); ++y)
        for (int xx = 0; xx < in.width(); ++xx)
            for (int c = 0; c < 3; ++c) {
                double v = contrast * (in.at(y, xx, c) + color[c]) + brightness;
                out.at(y, xx, c) = std::clamp(v, 0.0, 1.0);
            }
    return ImageTensor(std::move(out));
}

ImageTensor perturb(const ImageTensor& x, const PerturbConfig& cfg, Rng& rng) {
    cfg.validate();
    double brightness = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta);
    double contrast = 1.0 + rng.uniform(-cfg.contrast_range, cfg.contrast_range);
    std::array<double, 3> color;
    for (auto& c : color) c = rng.uniform(-cfg.color_jitter, cfg.color_jitter);
    return perturb_apply(x, brightness, contrast, color);
}

std::vector<ProxyRecord> build_proxy(const EnhancerModel& teacher, const PickFn& pick_fn,
                                     const std::vector<ImageTensor>& targets) {
    if (!pick_fn) throw ContractError("build_proxy needs a verdict callback");
    std::vector<ProxyRecord> proxy;
    for (const ImageTensor& x : targets) {
        EnhanceOutput out = forward(teacher, x);
        MaskTensor m_hard = out.mask_pred.argmax_onehot();
        PickVerdict v = pick_fn(out.enhanced, m_hard);
        if (v.picked)
            proxy.push_back(ProxyRecord{x, std::move(out.enhanced), std::move(m_hard), v});
    }
    return proxy;
}

void AdaptConfig::validate() const {
    if (epochs < 0) throw ContractError("adaptation epochs must be nonnegative");
    if (batch_size < 1) throw ContractError("batch size must be positive");
    if (lr0 < 0.0) throw ContractError("learning rate must be nonnegative");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ContractError("ema decay must lie in [0,1]");
    if (lambda_ce < 0.0) throw ContractError("structure weight must be nonnegative");
    perturb.validate();
}

TrainResult adapt(const EnhancerModel& source, const std::vector<ImageTensor>& targets,
                  const PickFn& pick_fn, const AdaptConfig& cfg, const AdaptObserver& observer) {
    cfg.validate();
    if (targets.empty()) throw ContractError("adaptation needs at least one target image");
    if (!pick_fn) throw ContractError("adaptation needs a verdict callback");

    TeacherStudent ts = TeacherStudent::from_source(source, cfg.ema_decay);

    // The optimizer mirrors source training: flat rate, then linear decay
    // over the final quarter of the budget.
    TrainConfig sched;
    sched.epochs_decay = cfg.epochs / 4;
    sched.epochs_flat = cfg.epochs - sched.epochs_decay;
    sched.lr0 = cfg.lr0;

    Gradients grads;
    grads.init_like(ts.student.layers);
    AdamState adam;
    adam.init_like(ts.student.layers);
    Rng shuffle_rng = Rng::forked(cfg.seed, 1);
    Rng perturb_rng = Rng::forked(cfg.seed ^ cfg.perturb.seed, 2);

    std::vector<EpochLog> logs;
    std::vector<ProxyRecord> proxy;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<ProxyRecord> fresh = build_proxy(ts.teacher, pick_fn, targets);
        bool reused = false;
        if (fresh.empty()) {
            if (proxy.empty())
                throw DataError(
                    "picker admitted no targets on the first refresh; relax tau_q/tau_s or "
                    "check target quality");
            reused = true;  // keep the previous epoch's proxy
        } else {
            proxy = std::move(fresh);
        }

        std::vector<std::size_t> order(proxy.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

        double lr = lr_schedule(sched, epoch);
        double loss_sum = 0.0;
        long steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const ProxyRecord& r = proxy[order[k]];
                ImageTensor xt = perturb(r.x_omega, cfg.perturb, perturb_rng);
                LossParts parts =
                    loss_and_backward(ts.student, xt, r.y_omega, r.m_omega, cfg.lambda_ce, grads);
                batch_loss += parts.total;
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite student loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(start / cfg.batch_size));
            grads.scale(1.0 / static_cast<double>(end - start));
            adam_step(ts.student.layers, grads, adam, lr);
            ema_update(ts.teacher, ts.student, cfg.ema_decay);
            if (observer) observer(ts.student, ts.teacher);
            loss_sum += batch_loss / static_cast<double>(end - start);
            ++steps;
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.mean_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        log.proxy_size = static_cast<int>(proxy.size());
        log.proxy_reused = reused;
        log.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        logs.push_back(log);
    }
    return TrainResult{std::move(ts.teacher), std::move(logs)};
}

TrainResult adapt(const EnhancerModel& source, const std::vector<ImageTensor>& targets,
                  const Picker& picker, const AdaptConfig& cfg, const AdaptObserver& observer) {
    PickFn fn;
    if (cfg.accept_all) {
        // Gate disabled: admit everything without scoring.
        fn = [](const ImageTensor&, const MaskTensor&) {
            return PickVerdict{1.0, 1.0, true};
        };
    } else {
        fn = [&picker](const ImageTensor& y, const MaskTensor& m) { return pick(picker, y, m); };
    }
    return adapt(source, targets, fn, cfg, observer);
}

AdaptReport adapt_report(const EnhancerModel& before, const EnhancerModel& after,
                         const std::vector<std::pair<ImageTensor, ImageTensor>>& targets_with_refs,
                         double unchanged_tol) {
    if (unchanged_tol < 0.0) throw ContractError("tolerance must be nonnegative");
    AdaptReport report;
    for (const auto& [x, y_ref] : targets_with_refs) {
        AdaptReportRow row;
        row.ssim_before = ssim(forward(before, x).enhanced, y_ref);
        row.ssim_after = ssim(forward(after, x).enhanced, y_ref);
        row.delta = row.ssim_after - row.ssim_before;
        if (std::abs(row.delta) <= unchanged_tol)
            ++report.unchanged;
        else if (row.delta > 0.0)
            ++report.improved;
        else
            ++report.regressed;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace sfea
