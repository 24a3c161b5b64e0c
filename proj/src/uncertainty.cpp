#include "uqseg/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "uqseg/error.hpp"

namespace uqseg::uncertainty {

namespace {

double log2_clamped(double p) { return std::log2(std::max(p, kLogEpsilon)); }

double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace

void validate_distribution(Distribution p) {
    if (p.empty()) throw PreconditionError("distribution is empty");
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("distribution entry outside [0, 1]");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw PreconditionError("distribution does not sum to 1");
}

double entropy(Distribution p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * log2_clamped(v);
    }
    return std::max(h, 0.0);
}

double max_probability(Distribution p) { return *std::max_element(p.begin(), p.end()); }

double kl_divergence(Distribution p, Distribution q) {
    if (p.size() != q.size()) throw PreconditionError("kl_divergence needs equal-length distributions");
    double d = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] > 0.0) d += p[k] * (log2_clamped(p[k]) - log2_clamped(q[k]));
    }
    return std::max(d, 0.0);
}

double binary_entropy(double fg) {
    const double p[2] = {1.0 - fg, fg};
    return entropy(p);
}

PixelDecomposition decompose_pixel(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) throw PreconditionError("decompose needs at least one sample");
    const std::size_t k = samples.front().size();
    for (const auto& s : samples) {
        if (s.size() != k) throw PreconditionError("samples disagree on class count");
        validate_distribution(s);
    }
    PixelDecomposition out;
    const bool no_spread = std::all_of(samples.begin(), samples.end(), [&](const auto& s) { return s == samples.front(); });
    if (no_spread) {
        out.total = out.expected = entropy(samples.front());
        return out;
    }
    std::vector<double> mean(k, 0.0);
    for (const auto& s : samples) {
        for (std::size_t c = 0; c < k; ++c) mean[c] += s[c];
    }
    for (double& m : mean) m /= static_cast<double>(samples.size());

    out.total = entropy(mean);
    double expected = 0.0;
    double divergence = 0.0;
    for (const auto& s : samples) {
        expected += entropy(s);
        divergence += kl_divergence(mean, s);
    }
    out.expected = expected / static_cast<double>(samples.size());
    out.mutual_information = std::max(out.total - out.expected, 0.0);
    out.ekl = divergence / static_cast<double>(samples.size());
    return out;
}

Raster expected_softmax(const SampleStack& stack) {
    stack.validate();
    const std::size_t n = stack.samples.front().size();
    std::vector<double> sum(n, 0.0);
    for (const Raster& r : stack.samples) {
        for (std::size_t i = 0; i < n; ++i) sum[i] += r[i];
    }
    const double t = static_cast<double>(stack.count());
    for (double& v : sum) v = std::clamp(v / t, 0.0, 1.0);
    return Raster(stack.width(), stack.height(), ValueKind::probability, std::move(sum));
}

UncertaintyMaps decompose(const SampleStack& stack) {
    stack.validate();
    const int w = stack.width();
    const int h = stack.height();
    const std::size_t n = stack.samples.front().size();
    const std::size_t t = stack.count();

    std::vector<double> total(n), expected(n), mi(n), ekl_v(n), var(n), pmax(n), phat(n);
    std::vector<double> fg(t);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < t; ++s) fg[s] = stack.samples[s][i];
        const auto [lo, hi] = std::minmax_element(fg.begin(), fg.end());
        if (*lo == *hi) {
            // No spread: every divergence term is exactly zero.
            phat[i] = *lo;
            total[i] = expected[i] = binary_entropy(*lo);
            mi[i] = ekl_v[i] = var[i] = 0.0;
            pmax[i] = std::max(*lo, 1.0 - *lo);
            continue;
        }
        const double m = std::clamp(mean_of(fg), 0.0, 1.0);
        const double mean_dist[2] = {1.0 - m, m};
        double h_sum = 0.0, kl_sum = 0.0, sq_sum = 0.0;
        for (double y : fg) {
            const double dist[2] = {1.0 - y, y};
            h_sum += entropy(dist);
            kl_sum += kl_divergence(mean_dist, dist);
            sq_sum += (y - m) * (y - m);
        }
        phat[i] = m;
        total[i] = entropy(mean_dist);
        expected[i] = h_sum / static_cast<double>(t);
        mi[i] = std::max(total[i] - expected[i], 0.0);
        ekl_v[i] = kl_sum / static_cast<double>(t);
        var[i] = sq_sum / static_cast<double>(t);
        pmax[i] = std::max(m, 1.0 - m);
    }

    auto unc = [&](std::vector<double>& v) { return Raster(w, h, ValueKind::uncertainty, std::move(v)); };
    return UncertaintyMaps{unc(total),
                           unc(expected),
                           unc(mi),
                           unc(ekl_v),
                           unc(var),
                           unc(pmax),
                           Raster(w, h, ValueKind::probability, std::move(phat))};
}

Raster ekl(const SampleStack& stack) { return decompose(stack).ekl; }

Raster variance(const SampleStack& stack) { return decompose(stack).variance; }

ScoreKind score_kind_from_string(const std::string& s) {
    if (s == "total") return ScoreKind::total;
    if (s == "data") return ScoreKind::data;
    if (s == "model") return ScoreKind::model;
    throw PreconditionError("unknown uncertainty score kind '" + s + "'");
}

const char* to_string(ScoreKind kind) {
    switch (kind) {
        case ScoreKind::total: return "total";
        case ScoreKind::data: return "data";
        case ScoreKind::model: return "model";
    }
    return "?";
}

double mean_value(const Raster& raster) { return mean_of(raster.values()); }

double image_uncertainty_score(const UncertaintyMaps& maps, ScoreKind kind) {
    switch (kind) {
        case ScoreKind::total: return mean_value(maps.total_entropy);
        case ScoreKind::data: return mean_value(maps.expected_entropy);
        case ScoreKind::model: return mean_value(maps.mutual_information);
    }
    return 0.0;
}

}  // namespace uqseg::uncertainty
