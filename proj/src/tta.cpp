#include "uqseg/tta.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uqseg/error.hpp"

namespace uqseg {

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::baseline: return "baseline";
        case Provenance::tta: return "tta";
        case Provenance::mcd: return "mcd";
    }
    return "?";
}

void TransformSpec::validate() const {
    if (!(scale >= 0.5 && scale <= 2.0)) throw PreconditionError("transform scale must lie in [0.5, 2]");
    if (!(std::abs(translate_x) <= 0.25 && std::abs(translate_y) <= 0.25)) {
        throw PreconditionError("transform translation must lie in [-0.25, 0.25]");
    }
    if (!(contrast_factor >= 0.25 && contrast_factor <= 4.0)) {
        throw PreconditionError("transform contrast must lie in [0.25, 4]");
    }
    if (!(noise_sigma >= 0.0)) throw PreconditionError("transform noise_sigma must be >= 0");
    if (!std::isfinite(rotation_deg) || !std::isfinite(brightness_delta)) {
        throw PreconditionError("transform parameters must be finite");
    }
}

void SampleStack::validate() const {
    if (samples.empty()) throw PreconditionError("sample stack is empty");
    for (const Raster& r : samples) {
        if (!r.same_shape(samples.front())) throw PreconditionError("sample stack rasters differ in shape");
        if (r.kind() != ValueKind::probability) throw PreconditionError("sample stack holds a non-probability raster");
    }
    if (provenance == Provenance::tta && transforms.size() != samples.size()) {
        throw PreconditionError("tta stack needs one transform per sample");
    }
}

}  // namespace uqseg

namespace uqseg::tta {

namespace {

// p -> centre + shift + scale * R * F * (p - centre), the forward spatial map.
struct Affine {
    double m00, m01, m10, m11;
    double tx, ty;

    void apply(double x, double y, double& ox, double& oy) const {
        ox = m00 * x + m01 * y + tx;
        oy = m10 * x + m11 * y + ty;
    }
};

Affine forward_affine(const TransformSpec& s, int width, int height) {
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    const double th = s.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th);
    const double sn = std::sin(th);
    const double f = s.hflip ? -1.0 : 1.0;
    Affine a{};
    a.m00 = s.scale * c * f;
    a.m01 = -s.scale * sn;
    a.m10 = s.scale * sn * f;
    a.m11 = s.scale * c;
    const double shift_x = s.translate_x * width;
    const double shift_y = s.translate_y * height;
    a.tx = cx + shift_x - (a.m00 * cx + a.m01 * cy);
    a.ty = cy + shift_y - (a.m10 * cx + a.m11 * cy);
    return a;
}

Affine inverse_affine(const TransformSpec& s, int width, int height) {
    const Affine a = forward_affine(s, width, height);
    const double det = a.m00 * a.m11 - a.m01 * a.m10;
    if (det == 0.0) throw PreconditionError("transform is not invertible");
    Affine inv{};
    inv.m00 = a.m11 / det;
    inv.m01 = -a.m01 / det;
    inv.m10 = -a.m10 / det;
    inv.m11 = a.m00 / det;
    inv.tx = -(inv.m00 * a.tx + inv.m01 * a.ty);
    inv.ty = -(inv.m10 * a.tx + inv.m11 * a.ty);
    return inv;
}

double sample_bilinear(const Raster& r, double x, double y) {
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double fx = x - fx0;
    const double fy = y - fy0;
    auto px = [&](int xx, int yy) {
        return (xx < 0 || yy < 0 || xx >= r.width() || yy >= r.height()) ? 0.0 : r.at(xx, yy);
    };
    const double top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
    const double bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

std::vector<double> flipped(const Raster& r) {
    std::vector<double> out(r.size());
    const int w = r.width();
    for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < w; ++x) out[r.index(x, y)] = r.at(w - 1 - x, y);
    }
    return out;
}

// Backward warp: out(q) = src(map(q)).
std::vector<double> warp(const Raster& src, const Affine& map) {
    std::vector<double> out(src.size());
    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            double sx = 0.0, sy = 0.0;
            map.apply(x, y, sx, sy);
            out[src.index(x, y)] = sample_bilinear(src, sx, sy);
        }
    }
    return out;
}

std::vector<double> spatial(const Raster& src, const TransformSpec& spec, bool inverse) {
    if (spec.spatial_identity()) return {src.values().begin(), src.values().end()};
    if (spec.flip_only()) return flipped(src);
    // The forward image is sampled through the inverse map and vice versa.
    const Affine map = inverse ? forward_affine(spec, src.width(), src.height())
                               : inverse_affine(spec, src.width(), src.height());
    return warp(src, map);
}

}  // namespace

AugmentationPriors AugmentationPriors::identity() {
    AugmentationPriors p;
    p.flip_prob = 0.0;
    p.rotation_deg = Range::point(0.0);
    p.scale = Range::point(1.0);
    p.translate_frac = Range::point(0.0);
    p.brightness = Range::point(0.0);
    p.contrast = Range::point(1.0);
    p.noise_sigma = 0.0;
    return p;
}

void AugmentationPriors::validate() const {
    auto check = [](const Range& r, double lo, double hi, const char* name) {
        if (!(r.lo <= r.hi) || !(r.lo >= lo) || !(r.hi <= hi)) {
            throw PreconditionError(std::string("prior range for ") + name + " is invalid or out of bounds");
        }
    };
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw PreconditionError("flip_prob must lie in [0, 1]");
    check(rotation_deg, -180.0, 180.0, "rotation_deg");
    check(scale, 0.5, 2.0, "scale");
    check(translate_frac, -0.25, 0.25, "translate_frac");
    check(brightness, -1.0, 1.0, "brightness");
    check(contrast, 0.25, 4.0, "contrast");
    if (!(noise_sigma >= 0.0)) throw PreconditionError("noise_sigma must be >= 0");
}

TransformSpec sample_transform(const AugmentationPriors& priors, Rng& rng) {
    TransformSpec s;
    s.hflip = rng.bernoulli(priors.flip_prob);
    s.rotation_deg = rng.uniform(priors.rotation_deg.lo, priors.rotation_deg.hi);
    s.scale = rng.uniform(priors.scale.lo, priors.scale.hi);
    s.translate_x = rng.uniform(priors.translate_frac.lo, priors.translate_frac.hi);
    s.translate_y = rng.uniform(priors.translate_frac.lo, priors.translate_frac.hi);
    s.brightness_delta = rng.uniform(priors.brightness.lo, priors.brightness.hi);
    s.contrast_factor = rng.uniform(priors.contrast.lo, priors.contrast.hi);
    s.noise_sigma = priors.noise_sigma;
    s.noise_seed = rng.next();
    return s;
}

Raster warp_forward(const Raster& raster, const TransformSpec& spec) {
    spec.validate();
    return Raster(raster.width(), raster.height(), raster.kind(), spatial(raster, spec, false));
}

Raster apply_transform(const Raster& image, const TransformSpec& spec) {
    if (image.kind() != ValueKind::intensity) throw PreconditionError("apply_transform expects an intensity raster");
    spec.validate();
    std::vector<double> v = spatial(image, spec, false);
    if (spec.contrast_factor != 1.0 || spec.brightness_delta != 0.0) {
        for (double& x : v) {
            x = std::clamp(spec.contrast_factor * (x - 0.5) + 0.5 + spec.brightness_delta, 0.0, 1.0);
        }
    }
    if (spec.noise_sigma > 0.0) {
        Rng rng(spec.noise_seed);
        for (double& x : v) x = std::clamp(x + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0);
    }
    return Raster(image.width(), image.height(), ValueKind::intensity, std::move(v));
}

Raster invert_spatial(const Raster& probmap, const TransformSpec& spec) {
    if (probmap.kind() != ValueKind::probability) throw PreconditionError("invert_spatial expects a probability raster");
    spec.validate();
    std::vector<double> v = spatial(probmap, spec, true);
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return Raster(probmap.width(), probmap.height(), ValueKind::probability, std::move(v));
}

SampleStack baseline_stack(const Predictor& predictor, const Raster& image, const Calibration& calibration) {
    SampleStack stack;
    stack.provenance = Provenance::baseline;
    try {
        Raster p = predictor.predict(image, PredictMode::deterministic(), calibration);
        if (!p.same_shape(image)) throw PredictorError("output shape differs from input");
        stack.samples.push_back(p.as(ValueKind::probability));
    } catch (const Error& e) {
        throw PredictorError(std::string("baseline: ") + e.what());
    }
    return stack;
}

SampleStack tta_sample_stack(const Predictor& predictor, const Raster& image, int samples,
                             const AugmentationPriors& priors, std::uint64_t seed, const Calibration& calibration) {
    if (samples < 1) throw PreconditionError("sample count must be >= 1");
    priors.validate();
    SampleStack stack;
    stack.provenance = Provenance::tta;
    stack.seed = seed;
    for (int n = 0; n < samples; ++n) {
        Rng rng(hash_seed(seed, static_cast<std::uint64_t>(n)));
        const TransformSpec spec = sample_transform(priors, rng);
        const Raster augmented = apply_transform(image, spec);
        try {
            const Raster p = predictor.predict(augmented, PredictMode::deterministic(), calibration);
            if (!p.same_shape(image)) throw PredictorError("output shape differs from input");
            stack.samples.push_back(invert_spatial(p.as(ValueKind::probability), spec));
        } catch (const Error& e) {
            throw PredictorError("sample " + std::to_string(n) + ": " + e.what());
        }
        stack.transforms.push_back(spec);
    }
    return stack;
}

Raster aggregate_mean(const SampleStack& stack) {
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

BinaryMask aggregate_mode(const SampleStack& stack, double threshold) {
    stack.validate();
    const std::size_t n = stack.samples.front().size();
    std::vector<std::size_t> votes(n, 0);
    for (const Raster& r : stack.samples) {
        for (std::size_t i = 0; i < n; ++i) votes[i] += r[i] > threshold ? 1 : 0;
    }
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = 2 * votes[i] > stack.count() ? 1 : 0;
    return BinaryMask(stack.width(), stack.height(), std::move(bits));
}

}  // namespace uqseg::tta
