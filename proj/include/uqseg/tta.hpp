#pragma once

#include <cstdint>

#include "uqseg/predictor.hpp"
#include "uqseg/raster.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/sample_stack.hpp"

namespace uqseg::tta {

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    static Range point(double v) { return {v, v}; }
};

/// Priors over augmentation parameters. Continuous parameters are uniform over
/// their ranges; the flip is Bernoulli(flip_prob); noise_sigma is fixed.
struct AugmentationPriors {
    double flip_prob = 0.5;
    Range rotation_deg{-15.0, 15.0};
    Range scale{0.9, 1.1};
    Range translate_frac{-0.05, 0.05};
    Range brightness{-0.1, 0.1};
    Range contrast{0.9, 1.1};
    double noise_sigma = 0.01;

    /// Priors that always yield the identity transform.
    static AugmentationPriors identity();

    void validate() const;
};

constexpr int kDefaultSamples = 8;

TransformSpec sample_transform(const AugmentationPriors& priors, Rng& rng);

/// Forward map Γ: flip -> rotate -> scale (about the raster centre) -> translate,
/// resampled once with bilinear interpolation (zero outside), then
/// contrast/brightness and clamped additive noise.
Raster apply_transform(const Raster& image, const TransformSpec& spec);

/// Exact inverse of the spatial part only, as one bilinear warp; result clamped to [0, 1].
Raster invert_spatial(const Raster& probmap, const TransformSpec& spec);

/// Spatial part of the forward map (no photometric step), for any value kind.
Raster warp_forward(const Raster& raster, const TransformSpec& spec);

/// One deterministic prediction wrapped as a single-sample stack.
SampleStack baseline_stack(const Predictor& predictor, const Raster& image,
                           const Calibration& calibration = Calibration{});

/// y_n = Γ_n^{-1}(f(Γ_n(X))) for n < samples, Γ_n drawn with rng(hash_seed(seed, n)).
SampleStack tta_sample_stack(const Predictor& predictor, const Raster& image, int samples,
                             const AugmentationPriors& priors, std::uint64_t seed,
                             const Calibration& calibration = Calibration{});

/// Pixelwise arithmetic mean of the stack.
Raster aggregate_mean(const SampleStack& stack);

/// Majority vote of [y_n > threshold]; an exact tie is background.
BinaryMask aggregate_mode(const SampleStack& stack, double threshold);

}  // namespace uqseg::tta
