#pragma once

#include <variant>
#include <vector>

#include "uqseg/raster.hpp"

namespace uqseg::geometry {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Closed boundary through pixel centers; the last point connects to the first.
using Contour = std::vector<Point>;

struct EllipseFit {
    Point center;
    double semi_major = 0.0;
    double semi_minor = 0.0;
    /// Direction of the major axis, degrees in [0, 180), measured from +x towards +y.
    double orientation_deg = 0.0;
};

struct OrientedRect {
    Point center;
    double side_long = 0.0;
    double side_short = 0.0;
    /// Direction of the long side, degrees in [0, 180).
    double orientation_deg = 0.0;

    double area() const { return side_long * side_short; }
};

enum class MeasurementKind { head_circumference, femur_length };

const char* to_string(MeasurementKind kind);

struct Measurement {
    MeasurementKind kind = MeasurementKind::head_circumference;
    double value_px = 0.0;
    double value_mm = 0.0;
    std::variant<EllipseFit, OrientedRect> fit;
};

/// Outer borders of the 8-connected foreground components, one contour per
/// component, in raster-scan order of each component's first pixel. Points are
/// pixel centers, oriented with a nonnegative signed shoelace area.
std::vector<Contour> extract_contours(const BinaryMask& mask);

/// Signed shoelace area (positive for counterclockwise in x-right/y-down axes
/// treated as a plain Cartesian frame).
double signed_area(const Contour& contour);
double area(const Contour& contour);

/// Maximum enclosed area; ties go to the earliest. Throws NoForegroundError on an empty list.
const Contour& largest_contour(const std::vector<Contour>& contours);

/// Direct least-squares ellipse fit with the 4AC - B^2 = 1 constraint
/// (numerically stable reduced form). Throws FitError.
EllipseFit fit_ellipse(const Contour& points);

/// L = 2*pi*b + 4*(a - b) with a, b the semi-axes.
double ellipse_circumference(double semi_major, double semi_minor);
double ellipse_circumference_px(const EllipseFit& fit);

/// Andrew's monotone chain; counterclockwise, no repeated or collinear points.
std::vector<Point> convex_hull(std::vector<Point> points);

/// Minimum-area enclosing rectangle by rotating calipers over the convex hull.
OrientedRect min_area_rect(const std::vector<Point>& points);

double femur_length_px(const OrientedRect& rect);

/// extract -> largest -> (head: ellipse + circumference, femur: caliper long side).
/// Throws NoForegroundError / FitError; never reports a silent zero.
Measurement measure(const BinaryMask& mask, Modality modality, const Calibration& calibration);

}  // namespace uqseg::geometry
