#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "uqseg/raster.hpp"
#include "uqseg/sample_stack.hpp"

namespace uqseg {

/// Deterministic, or stochastic with a seed (one stochastic forward pass).
struct PredictMode {
    bool stochastic = false;
    std::uint64_t seed = 0;

    static PredictMode deterministic() { return {}; }
    static PredictMode sampled(std::uint64_t seed) { return {true, seed}; }
};

/// Per-pixel foreground probability. Implementations must return a raster of
/// the input's shape; stochastic output must be a pure function of (input, seed).
class Predictor {
public:
    virtual ~Predictor() = default;

    virtual Raster predict(const Raster& image, const PredictMode& mode, const Calibration& calibration) const = 0;

    Raster predict(const Raster& image, const PredictMode& mode = {}) const {
        return predict(image, mode, Calibration{});
    }
};

struct SigmoidParams {
    double threshold = 0.5;
    double softness = 0.05;
    double threshold_jitter = 0.05;
    double softness_jitter = 0.01;  // log-normal spread of the softness

    void validate() const;
};

/// p = 1 / (1 + exp(-(I - threshold) / softness)). Stochastic mode draws one
/// (threshold, softness) perturbation per call.
class SigmoidPredictor final : public Predictor {
public:
    explicit SigmoidPredictor(SigmoidParams params = {});

    using Predictor::predict;
    Raster predict(const Raster& image, const PredictMode& mode, const Calibration& calibration) const override;

    const SigmoidParams& params() const noexcept { return params_; }

private:
    SigmoidParams params_;
};

/// Runs `<command> input.pgm output.uqp [--seed N]` in a fresh temporary
/// directory and reads the UQP1 result.
class ExternalPredictor final : public Predictor {
public:
    explicit ExternalPredictor(std::string command, std::chrono::milliseconds timeout = std::chrono::seconds(60));

    using Predictor::predict;
    Raster predict(const Raster& image, const PredictMode& mode, const Calibration& calibration) const override;

private:
    std::string command_;
    std::chrono::milliseconds timeout_;
};

/// T stochastic passes with per-sample seeds hash_seed(seed, t).
SampleStack mcd_sample_stack(const Predictor& predictor, const Raster& image, int samples, std::uint64_t seed,
                             const Calibration& calibration = Calibration{});

}  // namespace uqseg
