#include "uqseg/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "uqseg/error.hpp"

namespace uqseg::geometry {

namespace {

// Neighbour offsets, clockwise as seen on screen (y grows downwards).
constexpr std::array<int, 8> kDx = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr std::array<int, 8> kDy = {0, 1, 1, 1, 0, -1, -1, -1};

int direction_of(int dx, int dy) {
    for (int d = 0; d < 8; ++d) {
        if (kDx[d] == dx && kDy[d] == dy) return d;
    }
    return -1;
}

struct Pixel {
    int x;
    int y;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Moore-neighbour step: scan clockwise from the backtrack neighbour and return
// the first foreground pixel together with the new backtrack direction.
bool moore_step(const BinaryMask& mask, Pixel c, int backtrack, Pixel& next, int& next_backtrack) {
    for (int k = 1; k < 8; ++k) {
        const int d = (backtrack + k) % 8;
        const int nx = c.x + kDx[d];
        const int ny = c.y + kDy[d];
        if (mask.contains(nx, ny) && mask.at(nx, ny)) {
            const int prev = (d + 7) % 8;
            const int bx = c.x + kDx[prev];
            const int by = c.y + kDy[prev];
            next = {nx, ny};
            next_backtrack = direction_of(bx - nx, by - ny);
            return true;
        }
    }
    return false;
}

Contour trace_outer_border(const BinaryMask& mask, Pixel start) {
    Contour contour;
    contour.push_back({static_cast<double>(start.x), static_cast<double>(start.y)});

    Pixel second{};
    int backtrack = 4;  // west of the first pixel in scan order is background
    if (!moore_step(mask, start, backtrack, second, backtrack)) return contour;

    Pixel c = second;
    const std::size_t limit = 4 * mask.size() + 8;
    for (std::size_t guard = 0; guard < limit; ++guard) {
        Pixel n{};
        int nb = 0;
        moore_step(mask, c, backtrack, n, nb);
        if (c == start && n == second) break;
        contour.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
        c = n;
        backtrack = nb;
    }
    return contour;
}

double normalize_degrees(double deg) {
    double r = std::fmod(deg, 180.0);
    if (r < 0.0) r += 180.0;
    if (r >= 180.0 - 1e-9) r = 0.0;
    return r;
}

double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double dot(const Point& a, const Point& b) { return a.x * b.x + a.y * b.y; }

Point sub(const Point& a, const Point& b) { return {a.x - b.x, a.y - b.y}; }

}  // namespace

const char* to_string(MeasurementKind kind) {
    return kind == MeasurementKind::head_circumference ? "head_circumference" : "femur_length";
}

std::vector<Contour> extract_contours(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> visited(mask.size(), 0);
    std::vector<Contour> contours;
    std::vector<Pixel> stack;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = mask.index(x, y);
            if (!mask[i] || visited[i]) continue;

            // Mark the whole 8-connected component so it is traced once.
            stack.push_back({x, y});
            visited[i] = 1;
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                for (int d = 0; d < 8; ++d) {
                    const int nx = p.x + kDx[d];
                    const int ny = p.y + kDy[d];
                    if (!mask.contains(nx, ny)) continue;
                    const std::size_t j = mask.index(nx, ny);
                    if (mask[j] && !visited[j]) {
                        visited[j] = 1;
                        stack.push_back({nx, ny});
                    }
                }
            }

            Contour c = trace_outer_border(mask, {x, y});
            if (signed_area(c) < 0.0) std::reverse(c.begin() + 1, c.end());
            contours.push_back(std::move(c));
        }
    }
    return contours;
}

double signed_area(const Contour& contour) {
    const std::size_t n = contour.size();
    if (n < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = contour[i];
        const Point& b = contour[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

double area(const Contour& contour) { return std::abs(signed_area(contour)); }

const Contour& largest_contour(const std::vector<Contour>& contours) {
    if (contours.empty()) throw NoForegroundError("no foreground contour to measure");
    std::size_t best = 0;
    double best_area = area(contours[0]);
    for (std::size_t i = 1; i < contours.size(); ++i) {
        const double a = area(contours[i]);
        if (a > best_area) {
            best = i;
            best_area = a;
        }
    }
    return contours[best];
}

EllipseFit fit_ellipse(const Contour& points) {
    if (points.size() < 5) {
        throw FitError("ellipse fit needs at least 5 points, got " + std::to_string(points.size()));
    }
    const auto n = static_cast<Eigen::Index>(points.size());

    // Centre and scale for conditioning; the fit is invariant to both.
    double mx = 0.0, my = 0.0;
    for (const Point& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double spread = 0.0;
    for (const Point& p : points) spread += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
    spread = std::sqrt(spread / static_cast<double>(n));
    if (!(spread > 0.0)) throw FitError("degenerate point set (all points coincide)");

    Eigen::MatrixXd quad(n, 3), lin(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = (points[static_cast<std::size_t>(i)].x - mx) / spread;
        const double v = (points[static_cast<std::size_t>(i)].y - my) / spread;
        quad.row(i) << u * u, u * v, v * v;
        lin.row(i) << u, v, 1.0;
    }
    const Eigen::Matrix3d s1 = quad.transpose() * quad;
    const Eigen::Matrix3d s2 = quad.transpose() * lin;
    const Eigen::Matrix3d s3 = lin.transpose() * lin;

    Eigen::FullPivLU<Eigen::Matrix3d> s3_lu(s3);
    s3_lu.setThreshold(1e-10);
    if (!s3_lu.isInvertible()) throw FitError("collinear or degenerate scatter");

    const Eigen::Matrix3d t = -s3_lu.inverse() * s2.transpose();
    const Eigen::Matrix3d m = s1 + s2 * t;
    // Premultiply by the inverse of the 4AC - B^2 constraint matrix.
    Eigen::Matrix3d reduced;
    reduced.row(0) = m.row(2) / 2.0;
    reduced.row(1) = -m.row(1);
    reduced.row(2) = m.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> eig(reduced);
    if (eig.info() != Eigen::Success) throw FitError("eigen decomposition failed");

    int chosen = -1;
    double chosen_lambda = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d vec = eig.eigenvectors().col(k).real();
        const double constraint = 4.0 * vec(0) * vec(2) - vec(1) * vec(1);
        const double lambda = std::abs(eig.eigenvalues()(k).real());
        if (constraint > 0.0 && (chosen < 0 || lambda < chosen_lambda)) {
            chosen = k;
            chosen_lambda = lambda;
        }
    }
    if (chosen < 0) throw FitError("fitted conic is not an ellipse");

    const Eigen::Vector3d a1 = eig.eigenvectors().col(chosen).real();
    const Eigen::Vector3d a2 = t * a1;
    const double qa = a1(0), qb = a1(1), qc = a1(2);
    const double qd = a2(0), qe = a2(1), qf = a2(2);

    const double det = 4.0 * qa * qc - qb * qb;
    if (!(det > 0.0)) throw FitError("fitted conic is not an ellipse");
    const double cu = (qb * qe - 2.0 * qc * qd) / det;
    const double cv = (qb * qd - 2.0 * qa * qe) / det;
    const double f0 = qf + 0.5 * (qd * cu + qe * cv);

    Eigen::Matrix2d form;
    form << qa, qb / 2.0, qb / 2.0, qc;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> axes(form);
    const Eigen::Vector2d lambdas = axes.eigenvalues();
    const double r0 = -f0 / lambdas(0);
    const double r1 = -f0 / lambdas(1);
    if (!(r0 > 0.0) || !(r1 > 0.0)) throw FitError("fitted conic is an imaginary ellipse");

    // Smaller |eigenvalue| -> longer semi-axis.
    const int major = r0 >= r1 ? 0 : 1;
    const Eigen::Vector2d dir = axes.eigenvectors().col(major);

    EllipseFit fit;
    fit.center = {mx + spread * cu, my + spread * cv};
    fit.semi_major = spread * std::sqrt(std::max(r0, r1));
    fit.semi_minor = spread * std::sqrt(std::min(r0, r1));
    fit.orientation_deg = normalize_degrees(std::atan2(dir(1), dir(0)) * 180.0 / std::numbers::pi);
    return fit;
}

double ellipse_circumference(double semi_major, double semi_minor) {
    return 2.0 * std::numbers::pi * semi_minor + 4.0 * (semi_major - semi_minor);
}

double ellipse_circumference_px(const EllipseFit& fit) {
    return ellipse_circumference(fit.semi_major, fit.semi_minor);
}

std::vector<Point> convex_hull(std::vector<Point> points) {
    std::sort(points.begin(), points.end(),
              [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.size() < 3) return points;

    std::vector<Point> hull(2 * points.size());
    std::size_t k = 0;
    for (const Point& p : points) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
        const Point& p = points[i];
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    return hull;
}

OrientedRect min_area_rect(const std::vector<Point>& points) {
    if (points.empty()) throw PreconditionError("min_area_rect needs at least one point");
    const std::vector<Point> hull = convex_hull(points);
    OrientedRect rect;

    if (hull.size() == 1) {
        rect.center = hull[0];
        return rect;
    }
    if (hull.size() == 2) {
        // All input points are collinear; the hull endpoints are the farthest pair.
        const Point d = sub(hull[1], hull[0]);
        rect.center = {(hull[0].x + hull[1].x) / 2.0, (hull[0].y + hull[1].y) / 2.0};
        rect.side_long = std::hypot(d.x, d.y);
        rect.orientation_deg = normalize_degrees(std::atan2(d.y, d.x) * 180.0 / std::numbers::pi);
        return rect;
    }

    const std::size_t n = hull.size();
    auto at = [&](std::size_t i) -> const Point& { return hull[i % n]; };

    double best_area = std::numeric_limits<double>::infinity();
    std::size_t far = 1, top = 1, near = 1;
    for (std::size_t i = 0; i < n; ++i) {
        const Point base = at(i);
        Point e = sub(at(i + 1), base);
        const double len = std::hypot(e.x, e.y);
        e = {e.x / len, e.y / len};
        const Point normal{-e.y, e.x};

        auto along = [&](std::size_t j) { return dot(sub(at(j), base), e); };
        auto height = [&](std::size_t j) { return dot(sub(at(j), base), normal); };

        if (i == 0) {
            far = 1;
            while (along(far + 1) > along(far)) ++far;
            top = far;
            while (height(top + 1) > height(top)) ++top;
            near = top;
            while (along(near + 1) < along(near)) ++near;
        } else {
            far = std::max(far, i + 1);
            while (along(far + 1) > along(far)) ++far;
            top = std::max(top, far);
            while (height(top + 1) > height(top)) ++top;
            near = std::max(near, top);
            while (along(near + 1) < along(near)) ++near;
        }

        const double lo = std::min(0.0, along(near));
        const double hi = along(far);
        const double width = hi - lo;
        const double tall = height(top);
        const double a = width * tall;
        if (a < best_area) {
            best_area = a;
            const double mid_e = (lo + hi) / 2.0;
            rect.center = {base.x + e.x * mid_e + normal.x * tall / 2.0,
                           base.y + e.y * mid_e + normal.y * tall / 2.0};
            const Point long_dir = width >= tall ? e : normal;
            rect.side_long = std::max(width, tall);
            rect.side_short = std::min(width, tall);
            rect.orientation_deg =
                normalize_degrees(std::atan2(long_dir.y, long_dir.x) * 180.0 / std::numbers::pi);
        }
    }
    return rect;
}

double femur_length_px(const OrientedRect& rect) { return rect.side_long; }

Measurement measure(const BinaryMask& mask, Modality modality, const Calibration& calibration) {
    if (modality == Modality::unknown) throw PreconditionError("measure needs modality head or femur");
    const std::vector<Contour> contours = extract_contours(mask);
    const Contour& contour = largest_contour(contours);

    Measurement m;
    if (modality == Modality::head) {
        const EllipseFit fit = fit_ellipse(contour);
        m.kind = MeasurementKind::head_circumference;
        m.value_px = ellipse_circumference_px(fit);
        m.fit = fit;
    } else {
        const OrientedRect rect = min_area_rect(contour);
        m.kind = MeasurementKind::femur_length;
        m.value_px = femur_length_px(rect);
        m.fit = rect;
    }
    m.value_mm = m.value_px * calibration.pixel_size_mm();
    return m;
}

}  // namespace uqseg::geometry
