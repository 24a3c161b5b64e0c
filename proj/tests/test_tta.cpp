#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "uqseg/error.hpp"
#include "uqseg/predictor.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/tta.hpp"

using namespace uqseg;
using namespace uqseg::tta;

namespace {

// Band-limited probability map: wavelength 32 px.
Raster smooth_map(int w, int h) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            v[static_cast<std::size_t>(y) * w + x] =
                0.5 + 0.4 * std::sin(2 * std::numbers::pi * x / 32.0) * std::cos(2 * std::numbers::pi * y / 32.0);
        }
    }
    return Raster(w, h, ValueKind::probability, std::move(v));
}

double interior_mean_abs(const Raster& a, const Raster& b, int band) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = band; y < a.height() - band; ++y) {
        for (int x = band; x < a.width() - band; ++x) {
            sum += std::abs(a.at(x, y) - b.at(x, y));
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

Raster random_probmap(Rng& rng, int w, int h) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (double& x : v) x = rng.uniform();
    return Raster(w, h, ValueKind::probability, std::move(v));
}

}  // namespace

TEST(Priors, DefaultsAndSampleCount) {
    const AugmentationPriors p;
    EXPECT_EQ(p.flip_prob, 0.5);
    EXPECT_EQ(p.rotation_deg.lo, -15.0);
    EXPECT_EQ(p.rotation_deg.hi, 15.0);
    EXPECT_EQ(p.scale.lo, 0.9);
    EXPECT_EQ(p.scale.hi, 1.1);
    EXPECT_EQ(p.noise_sigma, 0.01);
    EXPECT_EQ(kDefaultSamples, 8);
}

TEST(Priors, DegenerateRangesGiveExactValues) {
    AugmentationPriors p = AugmentationPriors::identity();
    p.rotation_deg = Range::point(7.0);
    p.scale = Range::point(1.05);
    p.translate_frac = Range::point(0.02);
    p.brightness = Range::point(-0.03);
    p.contrast = Range::point(1.2);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const TransformSpec s = sample_transform(p, rng);
        EXPECT_FALSE(s.hflip);
        EXPECT_EQ(s.rotation_deg, 7.0);
        EXPECT_EQ(s.scale, 1.05);
        EXPECT_EQ(s.translate_x, 0.02);
        EXPECT_EQ(s.translate_y, 0.02);
        EXPECT_EQ(s.brightness_delta, -0.03);
        EXPECT_EQ(s.contrast_factor, 1.2);
        EXPECT_EQ(s.noise_sigma, 0.0);
    }
}

TEST(Priors, FlipProbabilityOneAlwaysFlips) {
    AugmentationPriors p;
    p.flip_prob = 1.0;
    Rng rng(2);
    for (int i = 0; i < 100; ++i) EXPECT_TRUE(sample_transform(p, rng).hflip);
}

TEST(Priors, RotationMeanIsCentred) {
    const AugmentationPriors p;
    Rng rng(3);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double r = sample_transform(p, rng).rotation_deg;
        ASSERT_GE(r, -15.0);
        ASSERT_LE(r, 15.0);
        sum += r;
    }
    EXPECT_LE(std::abs(sum / 10000.0), 0.5);
}

TEST(Priors, ValidationRejectsOutOfBounds) {
    AugmentationPriors p;
    p.scale = {1.2, 1.1};
    EXPECT_THROW(p.validate(), PreconditionError);
    p = {};
    p.flip_prob = 1.5;
    EXPECT_THROW(p.validate(), PreconditionError);
    p = {};
    p.translate_frac = {-0.5, 0.5};
    EXPECT_THROW(p.validate(), PreconditionError);
}

TEST(Apply, IdentityIsBitExact) {
    Rng rng(4);
    const Raster img = random_probmap(rng, 13, 9).as(ValueKind::intensity);
    EXPECT_EQ(apply_transform(img, TransformSpec{}), img);
}

TEST(Apply, HflipReversesRows) {
    const Raster img(2, 2, ValueKind::intensity, {0.1, 0.2, 0.3, 0.4});
    TransformSpec s;
    s.hflip = true;
    EXPECT_EQ(apply_transform(img, s).values()[0], 0.2);
    EXPECT_EQ(apply_transform(img, s), Raster(2, 2, ValueKind::intensity, {0.2, 0.1, 0.4, 0.3}));
}

TEST(Apply, BrightnessClamps) {
    TransformSpec s;
    s.brightness_delta = 0.1;
    EXPECT_EQ(apply_transform(Raster::filled(1, 1, ValueKind::intensity, 0.95), s)[0], 1.0);
    s.brightness_delta = 0.0;
    s.contrast_factor = 2.0;
    EXPECT_NEAR(apply_transform(Raster::filled(1, 1, ValueKind::intensity, 0.6), s)[0], 0.7, 1e-15);
}

TEST(Apply, NoiseIsSeededAndClamped) {
    TransformSpec s;
    s.noise_sigma = 0.5;
    s.noise_seed = 10;
    const Raster img = Raster::filled(16, 16, ValueKind::intensity, 0.5);
    const Raster a = apply_transform(img, s);
    EXPECT_EQ(a, apply_transform(img, s));
    for (double v : a.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    s.noise_seed = 11;
    EXPECT_NE(a, apply_transform(img, s));
}

TEST(Apply, PureRotationByNinetyIsAPermutation) {
    Rng rng(12);
    const Raster img = random_probmap(rng, 9, 9);
    TransformSpec s;
    s.rotation_deg = 90.0;
    const Raster out = warp_forward(img, s);
    // Forward map sends p to c + R(p - c); output(q) = input(R^-1 (q - c) + c).
    for (int y = 1; y < 8; ++y) {
        for (int x = 1; x < 8; ++x) {
            const int sx = y;
            const int sy = 8 - x;
            EXPECT_NEAR(out.at(x, y), img.at(sx, sy), 1e-12) << x << "," << y;
        }
    }
}

TEST(Invert, HflipRoundTripIsBitExact) {
    Rng rng(5);
    const Raster p = random_probmap(rng, 17, 11);
    TransformSpec s;
    s.hflip = true;
    EXPECT_EQ(invert_spatial(warp_forward(p, s), s), p);
    EXPECT_EQ(invert_spatial(p, TransformSpec{}), p);
}

TEST(Invert, Rotation30RoundTrip) {
    const Raster p = smooth_map(96, 96);
    TransformSpec s;
    s.rotation_deg = 30.0;
    const double err = interior_mean_abs(invert_spatial(warp_forward(p, s), s), p, 10);
    EXPECT_LE(err, 0.02);
    EXPECT_GT(err, 0.0);
}

TEST(Invert, SpatialPartOnly) {
    // Photometric parameters do not enter the inverse.
    Rng rng(6);
    const Raster p = random_probmap(rng, 8, 8);
    TransformSpec s;
    s.hflip = true;
    s.brightness_delta = 0.2;
    s.contrast_factor = 0.5;
    s.noise_sigma = 0.3;
    EXPECT_EQ(invert_spatial(warp_forward(p, s), s), p);
}

TEST(Stack, DegeneratePriorsReproduceBaseline) {
    SigmoidPredictor f;
    Rng rng(7);
    const Raster img = random_probmap(rng, 20, 14).as(ValueKind::intensity);
    const Raster base = baseline_stack(f, img).samples.at(0);
    const SampleStack st = tta_sample_stack(f, img, 6, AugmentationPriors::identity(), 3);
    ASSERT_EQ(st.count(), 6u);
    EXPECT_EQ(st.transforms.size(), 6u);
    for (const Raster& y : st.samples) EXPECT_EQ(y, base);
}

TEST(Stack, FlipOnlyPriorsAreEquivariant) {
    SigmoidPredictor f;
    Rng rng(8);
    const Raster img = random_probmap(rng, 21, 15).as(ValueKind::intensity);
    const Raster base = f.predict(img);
    AugmentationPriors flip = AugmentationPriors::identity();
    flip.flip_prob = 0.5;
    const SampleStack st = tta_sample_stack(f, img, 8, flip, 9);
    int flipped = 0;
    for (std::size_t n = 0; n < st.count(); ++n) {
        flipped += st.transforms[n].hflip ? 1 : 0;
        for (std::size_t i = 0; i < base.size(); ++i) ASSERT_NEAR(st.samples[n][i], base[i], 1e-12);
    }
    EXPECT_GT(flipped, 0);
}

TEST(Stack, FixedSeedReproduces) {
    SigmoidPredictor f;
    Rng rng(9);
    const Raster img = random_probmap(rng, 24, 24).as(ValueKind::intensity);
    const SampleStack a = tta_sample_stack(f, img, 8, {}, 21);
    const SampleStack b = tta_sample_stack(f, img, 8, {}, 21);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.transforms, b.transforms);
    EXPECT_NE(a.samples, tta_sample_stack(f, img, 8, {}, 22).samples);
    EXPECT_THROW(tta_sample_stack(f, img, 0, {}, 21), PreconditionError);
}

TEST(Aggregate, MeanExamples) {
    SampleStack st;
    st.samples = {Raster::filled(1, 1, ValueKind::probability, 0.2), Raster::filled(1, 1, ValueKind::probability, 0.6)};
    EXPECT_NEAR(aggregate_mean(st)[0], 0.4, 1e-15);

    Rng rng(10);
    const Raster m = random_probmap(rng, 5, 5);
    st.samples = {m, m, m};
    const Raster mean = aggregate_mean(st);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(mean[i], m[i], 1e-15);
}

TEST(Aggregate, MeanMatchesBruteForce) {
    Rng rng(11);
    SampleStack st;
    for (int i = 0; i < 8; ++i) st.samples.push_back(random_probmap(rng, 16, 12));
    const Raster mean = aggregate_mean(st);
    for (std::size_t px = 0; px < mean.size(); ++px) {
        double s = 0.0, lo = 1.0, hi = 0.0;
        for (int i = 0; i < 8; ++i) {
            s += st.samples[i][px];
            lo = std::min(lo, st.samples[i][px]);
            hi = std::max(hi, st.samples[i][px]);
        }
        ASSERT_NEAR(mean[px], s / 8.0, 1e-15);
        ASSERT_GE(mean[px], lo);
        ASSERT_LE(mean[px], hi);
    }
    EXPECT_THROW(aggregate_mean(SampleStack{}), PreconditionError);
}

TEST(Aggregate, MajorityVote) {
    auto stack_of = [](std::initializer_list<double> vs) {
        SampleStack st;
        for (double v : vs) st.samples.push_back(Raster::filled(1, 1, ValueKind::probability, v));
        return st;
    };
    EXPECT_TRUE(aggregate_mode(stack_of({0.9, 0.8, 0.1}), 0.5).at(0, 0));
    EXPECT_FALSE(aggregate_mode(stack_of({0.9, 0.1}), 0.5).at(0, 0));
    EXPECT_EQ(aggregate_mode(stack_of({0.1, 0.2, 0.5}), 0.5).count(), 0u);
}
