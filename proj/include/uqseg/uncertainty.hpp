#pragma once

#include <span>
#include <string>
#include <vector>

#include "uqseg/raster.hpp"
#include "uqseg/sample_stack.hpp"

namespace uqseg::uncertainty {

/// Clamp applied inside every logarithm.
constexpr double kLogEpsilon = 1e-12;

/// Categorical distribution over K classes; entries in [0, 1] summing to 1 (1e-9).
using Distribution = std::span<const double>;

void validate_distribution(Distribution p);

/// Shannon entropy in bits with 0 log 0 = 0.
double entropy(Distribution p);
double max_probability(Distribution p);
/// KL(p || q) in bits, q clamped at kLogEpsilon.
double kl_divergence(Distribution p, Distribution q);

/// Binary (background, foreground) helpers.
double binary_entropy(double fg);

struct UncertaintyMaps {
    Raster total_entropy;       // H(p_hat)
    Raster expected_entropy;    // mean H(p_i): data / aleatoric
    Raster mutual_information;  // total - expected: model / epistemic
    Raster ekl;                 // mean KL(p_hat || p_i)
    Raster variance;            // population variance of the foreground probability
    Raster max_prob;            // max_k p_hat_k
    Raster expected_softmax;    // p_hat (foreground)
};

/// Mean foreground probability over the stack (same as tta::aggregate_mean).
Raster expected_softmax(const SampleStack& stack);

/// Per-pixel decomposition over the stack's foreground probabilities (K = 2).
UncertaintyMaps decompose(const SampleStack& stack);

Raster ekl(const SampleStack& stack);
Raster variance(const SampleStack& stack);

/// General-K decomposition at one pixel. `samples[i]` is the i-th distribution.
struct PixelDecomposition {
    double total = 0.0;
    double expected = 0.0;
    double mutual_information = 0.0;
    double ekl = 0.0;
};
PixelDecomposition decompose_pixel(const std::vector<std::vector<double>>& samples);

enum class ScoreKind { total, data, model };

ScoreKind score_kind_from_string(const std::string& s);
const char* to_string(ScoreKind kind);

/// Whole-image mean of the selected map.
double image_uncertainty_score(const UncertaintyMaps& maps, ScoreKind kind);
double mean_value(const Raster& raster);

}  // namespace uqseg::uncertainty
