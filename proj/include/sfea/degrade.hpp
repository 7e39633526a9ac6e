#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "sfea/image.hpp"

namespace sfea {

// Degradation stages a parameter sampler may activate, as a bit set so the
// named families below can combine several.
enum DegradationKind : unsigned {
    kDegradeBlur = 1u << 0,
    kDegradeIllumination = 1u << 1,
    kDegradeArtifact = 1u << 2,
    kDegradeHaze = 1u << 3,
    kDegradeSpeckle = 1u << 4,
};
using DegradationSet = unsigned;

// The two synthetic domains the experiments shift between: generic imaging
// interference (blur + lighting + local artifacts) and a cataract-like veil
// (blur + haze).
inline constexpr DegradationSet kInterferenceFamily =
    kDegradeBlur | kDegradeIllumination | kDegradeArtifact;
inline constexpr DegradationSet kCataractFamily = kDegradeBlur | kDegradeHaze;
inline constexpr DegradationSet kAllDegradations =
    kInterferenceFamily | kDegradeHaze | kDegradeSpeckle;

// Defaults are the zero-strength identity; degrade_one applies the stages in
// the fixed order blur -> illumination -> artifacts -> haze -> speckle and
// clamps to [0,1] once at the end.
struct DegradationParams {
    double blur_sigma = 0.0;                      // Gaussian blur, >= 0 px
    double illum_gain = 1.0;                      // global gain, > 0
    double illum_offset = 0.0;                    // global offset
    int artifact_count = 0;                       // soft bright/dark discs, >= 0
    double haze_alpha = 0.0;                      // blend toward haze_color, [0,1]
    std::array<double, 3> haze_color{1.0, 1.0, 1.0};  // veil color, each in [0,1]
    double speckle_var = 0.0;                     // multiplicative noise variance, >= 0
    std::uint64_t rng_seed = 0;                   // drives artifact placement and speckle

    bool is_identity() const;
    void validate() const;
};

struct SourceSample {
    ImageTensor x;  // degraded input
    ImageTensor y;  // clean reference
    MaskTensor m;   // ground-truth structure
    DegradationParams params;
};

ImageTensor degrade_one(const ImageTensor& y, const DegradationParams& params);

// Draws one parameter set from calibrated ranges; stages outside `modes` stay
// at their identity values.
DegradationParams sample_params(DegradationSet modes, Rng& rng);

// len(clean) * per_image samples; sample i*per_image+j is seeded with
// base seed + flat index, so synthesis order never changes content.
std::vector<SourceSample> synthesize_dataset(
    const std::vector<std::pair<ImageTensor, MaskTensor>>& clean, int per_image,
    DegradationSet modes, std::uint64_t seed);

// Procedural clean corpus: smooth warm-toned backgrounds with dark curving
// vessel strokes and exact two-class masks (0 background, 1 vessel).
std::vector<std::pair<ImageTensor, MaskTensor>> make_toy_corpus(int n, int size,
                                                                std::uint64_t seed);

}  // namespace sfea
