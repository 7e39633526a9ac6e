#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sfea/picker.hpp"
#include "sfea/trainer.hpp"

namespace sfea {

// Teacher/student pair for mean-teacher adaptation. Both start as bitwise
// copies of the source model; the teacher only ever moves through EMA blends,
// never through gradients.
struct TeacherStudent {
    EnhancerModel teacher;
    EnhancerModel student;
    double ema_decay = 0.999;

    static TeacherStudent from_source(const EnhancerModel& source, double ema_decay);
};

// One picker-admitted pseudo-label triple; verdict.picked is always true.
struct ProxyRecord {
    ImageTensor x_omega;   // raw target input
    ImageTensor y_omega;   // teacher-enhanced pseudo-label
    MaskTensor m_omega;    // teacher mask, argmax re-one-hotted
    PickVerdict verdict;
};

// Photometric jitter magnitudes for the student's inputs; all-zero magnitudes
// make perturb the bitwise identity.
struct PerturbConfig {
    double brightness_delta = 0.1;    // offset drawn from +-delta
    double contrast_range = 0.1;      // factor drawn from 1 +- range
    double color_jitter = 0.05;       // per-channel offset drawn from +-jitter
    std::uint64_t seed = 0;

    void validate() const;
};

// x' = clamp(contrast * (x + color[c]) + brightness), with drawn parameters.
ImageTensor perturb_apply(const ImageTensor& x, double brightness, double contrast,
                          const std::array<double, 3>& color);
ImageTensor perturb(const ImageTensor& x, const PerturbConfig& cfg, Rng& rng);

// Verdict callback seam: the real picker, an accept-all shim, or a test stub.
using PickFn = std::function<PickVerdict(const ImageTensor& y_alpha, const MaskTensor& m_alpha)>;

// Runs the frozen teacher over each target and keeps the triples the verdict
// admits. An empty result is legal here; adapt decides how to react.
std::vector<ProxyRecord> build_proxy(const EnhancerModel& teacher, const PickFn& pick_fn,
                                     const std::vector<ImageTensor>& targets);

struct AdaptConfig {
    int epochs = 200;
    int batch_size = 8;
    double lr0 = 0.001;        // flat, then linear decay over the final quarter
    double ema_decay = 0.999;
    double lambda_ce = 0.3;
    bool accept_all = false;   // ablation: bypass the picker gate
    PerturbConfig perturb;
    std::uint64_t seed = 0;

    void validate() const;
};

// Test/inspection seam: called after each student step with the post-step
// student and post-EMA teacher.
using AdaptObserver = std::function<void(const EnhancerModel& student, const EnhancerModel& teacher)>;

// Source-free adaptation: per epoch, refresh the proxy dataset with the
// current teacher, train the student on perturbed inputs against the frozen
// pseudo-labels, and EMA-blend the teacher after every step. Returns the
// teacher. An empty first refresh aborts with advice to relax the picker
// thresholds; an empty later refresh reuses the previous proxy and flags the
// epoch log.
TrainResult adapt(const EnhancerModel& source, const std::vector<ImageTensor>& targets,
                  const PickFn& pick_fn, const AdaptConfig& cfg,
                  const AdaptObserver& observer = {});
TrainResult adapt(const EnhancerModel& source, const std::vector<ImageTensor>& targets,
                  const Picker& picker, const AdaptConfig& cfg,
                  const AdaptObserver& observer = {});

// Per-sample before/after comparison against clean references.
struct AdaptReportRow {
    double ssim_before = 0.0;
    double ssim_after = 0.0;
    double delta = 0.0;
};

struct AdaptReport {
    std::vector<AdaptReportRow> rows;
    int improved = 0, unchanged = 0, regressed = 0;  // by |delta| vs tolerance
};

AdaptReport adapt_report(const EnhancerModel& before, const EnhancerModel& after,
                         const std::vector<std::pair<ImageTensor, ImageTensor>>& targets_with_refs,
                         double unchanged_tol = 1e-4);

}  // namespace sfea
