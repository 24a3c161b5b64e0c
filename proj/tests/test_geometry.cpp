#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "uqseg/error.hpp"
#include "uqseg/geometry.hpp"
#include "uqseg/phantom.hpp"
#include "uqseg/rng.hpp"

using namespace uqseg;
using namespace uqseg::geometry;

namespace {

constexpr double kPi = std::numbers::pi;

BinaryMask rect_mask(int w, int h, int x0, int y0, int rw, int rh) {
    BinaryMask m(w, h);
    for (int y = y0; y < y0 + rh; ++y) {
        for (int x = x0; x < x0 + rw; ++x) m.set(x, y, true);
    }
    return m;
}

Contour ellipse_points(double cx, double cy, double a, double b, double deg, int n) {
    const double th = deg * kPi / 180.0;
    Contour pts;
    for (int i = 0; i < n; ++i) {
        const double t = 2.0 * kPi * i / n;
        const double u = a * std::cos(t), v = b * std::sin(t);
        pts.push_back({cx + u * std::cos(th) - v * std::sin(th), cy + u * std::sin(th) + v * std::cos(th)});
    }
    return pts;
}

double angle_diff_deg(double a, double b) {
    double d = std::fmod(std::abs(a - b), 180.0);
    return std::min(d, 180.0 - d);
}

// Minimum bounding-box area over orientations sampled every 0.1 degree.
double sweep_min_area(const std::vector<Point>& pts) {
    double best = 1e300;
    for (int k = 0; k < 1800; ++k) {
        const double th = k * 0.1 * kPi / 180.0;
        const double c = std::cos(th), s = std::sin(th);
        double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
        for (const Point& p : pts) {
            const double u = p.x * c + p.y * s, v = -p.x * s + p.y * c;
            umin = std::min(umin, u);
            umax = std::max(umax, u);
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
        best = std::min(best, (umax - umin) * (vmax - vmin));
    }
    return best;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps, double whole,
                        double fa, double fm, double fb, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, eps / 2, left, fa, flm, fm, depth - 1) +
           adaptive_simpson(f, m, b, eps / 2, right, fm, frm, fb, depth - 1);
}

// Exact perimeter 4a * E(e) by adaptive quadrature of the complete elliptic integral.
double true_perimeter(double a, double b) {
    const double e2 = 1.0 - (b * b) / (a * a);
    auto f = [&](double t) { return std::sqrt(1.0 - e2 * std::sin(t) * std::sin(t)); };
    const double lo = 0.0, hi = kPi / 2.0;
    const double fa = f(lo), fm = f(0.5 * (lo + hi)), fb = f(hi);
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    return 4.0 * a * adaptive_simpson(f, lo, hi, 1e-13, whole, fa, fm, fb, 50);
}

}  // namespace

TEST(Contours, SinglePixelIsDegenerate) {
    BinaryMask m(3, 3);
    m.set(1, 1, true);
    const auto cs = extract_contours(m);
    ASSERT_EQ(cs.size(), 1u);
    ASSERT_EQ(cs[0].size(), 1u);
    EXPECT_EQ(cs[0][0], (Point{1, 1}));
    EXPECT_EQ(area(cs[0]), 0.0);
}

TEST(Contours, FilledSquareBorder) {
    const auto cs = extract_contours(rect_mask(8, 8, 2, 3, 4, 4));
    ASSERT_EQ(cs.size(), 1u);
    const Contour& c = cs[0];
    ASSERT_EQ(c.size(), 12u);
    // Every border pixel of the 4x4 block appears exactly once.
    int border = 0;
    for (int y = 3; y < 7; ++y) {
        for (int x = 2; x < 6; ++x) {
            if (x != 2 && x != 5 && y != 3 && y != 6) continue;
            ++border;
            EXPECT_EQ(std::count(c.begin(), c.end(), Point{double(x), double(y)}), 1) << x << "," << y;
        }
    }
    EXPECT_EQ(border, 12);
    EXPECT_EQ(signed_area(c), 9.0);
}

TEST(Contours, RectangleShoelaceIsPixelCentrePolygon) {
    for (int w = 1; w <= 7; ++w) {
        for (int h = 1; h <= 6; ++h) {
            const auto cs = extract_contours(rect_mask(12, 11, 2, 3, w, h));
            ASSERT_EQ(cs.size(), 1u);
            EXPECT_EQ(area(cs[0]), static_cast<double>((w - 1) * (h - 1))) << w << "x" << h;
            EXPECT_GE(signed_area(cs[0]), 0.0);
        }
    }
}

TEST(Contours, DisjointBlobs) {
    BinaryMask m = rect_mask(12, 12, 1, 1, 3, 3);
    for (int y = 6; y < 11; ++y) {
        for (int x = 6; x < 11; ++x) m.set(x, y, true);
    }
    const auto cs = extract_contours(m);
    ASSERT_EQ(cs.size(), 2u);
    EXPECT_EQ(area(cs[0]), 4.0);
    EXPECT_EQ(area(cs[1]), 16.0);
    EXPECT_EQ(&largest_contour(cs), &cs[1]);
}

TEST(Contours, DiagonalNeighboursJoin) {
    BinaryMask m(5, 5);
    m.set(1, 1, true);
    m.set(2, 2, true);
    m.set(3, 3, true);
    const auto cs = extract_contours(m);
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(area(cs[0]), 0.0);
    EXPECT_TRUE(extract_contours(BinaryMask(4, 4)).empty());
}

TEST(Contours, HoleDoesNotSplitOuterBorder) {
    BinaryMask m = rect_mask(9, 9, 1, 1, 7, 7);
    m.set(4, 4, false);
    const auto cs = extract_contours(m);
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(area(cs[0]), 36.0);
}

TEST(Largest, PicksMaxAreaAndFirstOnTie) {
    const Contour big = {{0, 0}, {4, 0}, {4, 3}, {0, 3}};
    const Contour small = {{0, 0}, {3, 0}, {3, 1}, {0, 1}};
    std::vector<Contour> cs = {small, big};
    EXPECT_EQ(largest_contour(cs), big);
    cs = {big};
    EXPECT_EQ(largest_contour(cs), big);
    cs = {small, small};
    EXPECT_EQ(&largest_contour(cs), &cs[0]);
    EXPECT_THROW(largest_contour({}), NoForegroundError);
}

TEST(Shoelace, Square) {
    const Contour sq = {{0, 0}, {4, 0}, {4, 4}, {0, 4}};
    EXPECT_EQ(signed_area(sq), 16.0);
    const Contour rev(sq.rbegin(), sq.rend());
    EXPECT_EQ(signed_area(rev), -16.0);
    EXPECT_EQ(area(rev), 16.0);
}

TEST(EllipseFit, ParametricSamples) {
    const EllipseFit f = fit_ellipse(ellipse_points(50, 50, 20, 10, 0, 64));
    EXPECT_NEAR(f.center.x, 50, 50e-3);
    EXPECT_NEAR(f.center.y, 50, 50e-3);
    EXPECT_NEAR(f.semi_major / 20.0, 1.0, 1e-3);
    EXPECT_NEAR(f.semi_minor / 10.0, 1.0, 1e-3);
    EXPECT_LT(angle_diff_deg(f.orientation_deg, 0.0), 1e-3);
}

TEST(EllipseFit, Circle) {
    const EllipseFit f = fit_ellipse(ellipse_points(-3, 7, 12.5, 12.5, 0, 40));
    EXPECT_NEAR(f.semi_major, 12.5, 12.5e-3);
    EXPECT_NEAR(f.semi_minor, 12.5, 12.5e-3);
}

TEST(EllipseFit, ExactOverAspectAndOrientation) {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const double b = rng.uniform(3, 40);
        const double a = b * rng.uniform(1.0, 6.0);
        const double deg = rng.uniform(0, 180);
        const double cx = rng.uniform(-100, 300), cy = rng.uniform(-100, 300);
        const EllipseFit f = fit_ellipse(ellipse_points(cx, cy, a, b, deg, 48));
        ASSERT_NEAR(f.semi_major / a, 1.0, 1e-3);
        ASSERT_NEAR(f.semi_minor / b, 1.0, 1e-3);
        ASSERT_NEAR(f.center.x, cx, 1e-3 * a);
        ASSERT_NEAR(f.center.y, cy, 1e-3 * a);
        if (a / b > 1.01) ASSERT_LT(angle_diff_deg(f.orientation_deg, deg), 0.1);
        ASSERT_GE(f.orientation_deg, 0.0);
        ASSERT_LT(f.orientation_deg, 180.0);
    }
}

TEST(EllipseFit, DegenerateInputs) {
    const Contour four = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    EXPECT_THROW(fit_ellipse(four), FitError);
    Contour line;
    for (int i = 0; i < 10; ++i) line.push_back({double(i), 2.0 * i});
    EXPECT_THROW(fit_ellipse(line), FitError);
    const Contour same(12, Point{3.0, 4.0});
    EXPECT_THROW(fit_ellipse(same), FitError);
}

TEST(Circumference, Examples) {
    EXPECT_NEAR(ellipse_circumference(40, 40), 2 * kPi * 40, 1e-12);
    EXPECT_NEAR(ellipse_circumference(40, 40), 251.327, 5e-4);
    EXPECT_NEAR(ellipse_circumference(60, 40), 2 * kPi * 40 + 80, 1e-12);
    EXPECT_NEAR(ellipse_circumference(60, 40), 331.327, 5e-4);
    EXPECT_NEAR(ellipse_circumference(60, 40) * 0.1, 33.1327, 5e-5);
}

TEST(Circumference, GapToTruePerimeter) {
    EXPECT_NEAR(true_perimeter(1.0, 1.0), 2 * kPi, 1e-10);
    // Ramanujan II as a sanity anchor for the quadrature.
    const double a = 3, b = 2, h = (a - b) * (a - b) / ((a + b) * (a + b));
    const double ramanujan = kPi * (a + b) * (1 + 3 * h / (10 + std::sqrt(4 - 3 * h)));
    EXPECT_NEAR(true_perimeter(a, b), ramanujan, 1e-8);

    double prev = -1.0;
    for (double ratio = 1.0; ratio <= 1.5 + 1e-9; ratio += 0.05) {
        const double gap = (ellipse_circumference(ratio, 1.0) - true_perimeter(ratio, 1.0)) / true_perimeter(ratio, 1.0);
        EXPECT_GE(gap, prev - 1e-15);
        prev = gap;
    }
    // Gap is 0 at the circle and grows roughly linearly: ~1.2% at 1.1 and ~4.4% at 1.5.
    auto gap_at = [](double r) { return ellipse_circumference(r, 1.0) / true_perimeter(r, 1.0) - 1.0; };
    EXPECT_NEAR(gap_at(1.0), 0.0, 1e-12);
    EXPECT_LT(gap_at(1.06), 0.009);
    EXPECT_NEAR(gap_at(1.1), 0.0125, 0.001);
    EXPECT_NEAR(gap_at(1.5), 0.044, 0.002);
}

TEST(MinRect, AxisAlignedBox) {
    const OrientedRect r = min_area_rect({{0, 0}, {4, 0}, {4, 2}, {0, 2}});
    EXPECT_NEAR(r.side_long, 4.0, 1e-12);
    EXPECT_NEAR(r.side_short, 2.0, 1e-12);
    EXPECT_LT(angle_diff_deg(r.orientation_deg, 0.0), 1e-9);
    EXPECT_NEAR(r.center.x, 2.0, 1e-12);
    EXPECT_NEAR(r.center.y, 1.0, 1e-12);
    EXPECT_EQ(femur_length_px(r), 4.0);
}

TEST(MinRect, RotatedBox) {
    const double th = 30.0 * kPi / 180.0;
    std::vector<Point> pts;
    for (const Point& p : std::vector<Point>{{0, 0}, {4, 0}, {4, 2}, {0, 2}}) {
        pts.push_back({p.x * std::cos(th) - p.y * std::sin(th), p.x * std::sin(th) + p.y * std::cos(th)});
    }
    const OrientedRect r = min_area_rect(pts);
    EXPECT_NEAR(r.side_long, 4.0, 1e-9);
    EXPECT_NEAR(r.side_short, 2.0, 1e-9);
    EXPECT_LT(angle_diff_deg(r.orientation_deg, 30.0), 1e-9);
}

TEST(MinRect, SquareAndDegenerates) {
    const OrientedRect sq = min_area_rect({{1, 1}, {4, 1}, {4, 4}, {1, 4}, {2, 2}});
    EXPECT_NEAR(femur_length_px(sq), 3.0, 1e-12);
    EXPECT_NEAR(sq.side_short, 3.0, 1e-12);
    const OrientedRect seg = min_area_rect({{0, 0}, {3, 4}, {1.5, 2}});
    EXPECT_NEAR(seg.side_long, 5.0, 1e-12);
    EXPECT_EQ(seg.side_short, 0.0);
    const OrientedRect dot = min_area_rect({{2, 2}});
    EXPECT_EQ(dot.side_long, 0.0);
    EXPECT_THROW(min_area_rect({}), PreconditionError);
}

TEST(MinRect, DenseSweepOracleAndRotationInvariance) {
    Rng rng(41);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 3 + static_cast<int>(rng.next() % 40);
        std::vector<Point> pts;
        for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-50, 50), rng.uniform(-20, 20)});
        const OrientedRect r = min_area_rect(pts);
        ASSERT_LE(r.area(), sweep_min_area(pts) * 1.005 + 1e-12);
        for (const Point& p : pts) {
            // Every point lies inside the rectangle.
            const double th = r.orientation_deg * kPi / 180.0;
            const double u = (p.x - r.center.x) * std::cos(th) + (p.y - r.center.y) * std::sin(th);
            const double v = -(p.x - r.center.x) * std::sin(th) + (p.y - r.center.y) * std::cos(th);
            ASSERT_LE(std::abs(u), r.side_long / 2 + 1e-9);
            ASSERT_LE(std::abs(v), r.side_short / 2 + 1e-9);
        }
        const double phi = rng.uniform(0, 2 * kPi);
        std::vector<Point> rot;
        for (const Point& p : pts) {
            rot.push_back({p.x * std::cos(phi) - p.y * std::sin(phi) + 7, p.x * std::sin(phi) + p.y * std::cos(phi) - 3});
        }
        const OrientedRect rr = min_area_rect(rot);
        ASSERT_NEAR(rr.side_long, r.side_long, 1e-9);
        ASSERT_NEAR(rr.side_short, r.side_short, 1e-9);
    }
}

TEST(ConvexHull, DropsInteriorAndCollinear) {
    const auto hull = convex_hull({{0, 0}, {2, 0}, {4, 0}, {4, 4}, {0, 4}, {2, 2}, {0, 0}});
    EXPECT_EQ(hull.size(), 4u);
    EXPECT_GT(signed_area(hull), 0.0);
}

TEST(Measure, EllipsePhantom) {
    phantom::PhantomSpec s;
    s.semi_major = 60;
    s.semi_minor = 40;
    s.orientation_deg = 25;
    const auto p = phantom::generate_phantom(s, 0);
    const Measurement m = measure(p.mask, Modality::head, p.meta.calibration);
    EXPECT_EQ(m.kind, MeasurementKind::head_circumference);
    EXPECT_NEAR(m.value_mm, 33.1327, 33.1327 * 0.02);
    EXPECT_NEAR(m.value_mm, m.value_px * 0.1, 1e-12);
    const auto& fit = std::get<EllipseFit>(m.fit);
    EXPECT_LT(angle_diff_deg(fit.orientation_deg, 25.0), 1.0);
}

TEST(Measure, CapsulePhantom) {
    for (double deg : {0.0, 17.0, 45.0, 90.0, 133.0}) {
        phantom::PhantomSpec s;
        s.kind = phantom::ShapeKind::capsule;
        s.length = 80;
        s.radius = 7;
        s.orientation_deg = deg;
        const auto p = phantom::generate_phantom(s, 0);
        const Measurement m = measure(p.mask, Modality::femur, p.meta.calibration);
        EXPECT_EQ(m.kind, MeasurementKind::femur_length);
        EXPECT_NEAR(m.value_px, 80.0, 2.0) << deg;
        EXPECT_NEAR(m.value_mm, 8.0, 0.2) << deg;
    }
}

TEST(Measure, EmptyMaskIsFlaggedNotZero) {
    EXPECT_THROW(measure(BinaryMask(10, 10), Modality::head, Calibration(0.1)), NoForegroundError);
    EXPECT_THROW(measure(BinaryMask(10, 10), Modality::femur, Calibration(0.1)), NoForegroundError);
    BinaryMask tiny(10, 10);
    tiny.set(4, 4, true);
    tiny.set(5, 4, true);
    EXPECT_THROW(measure(tiny, Modality::head, Calibration(0.1)), FitError);
    EXPECT_THROW(measure(rect_mask(10, 10, 2, 2, 3, 3), Modality::unknown, Calibration(0.1)), PreconditionError);
}
