#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pointhead/tensor.hpp"

namespace pointhead {

enum class Task { Classification, Detection, Segmentation, Pose };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Ordered points in feature-map coordinates. Index i binds to offset
/// generator i and, for dense tasks, to ground-truth target i.
using PointSet = std::vector<Point2>;

struct BoxXYXY {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    Point2 center() const { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }
    bool valid() const { return x1 <= x2 && y1 <= y2; }
};

/// Closed polygon; the last vertex connects back to the first. Coordinates
/// follow the image convention: y grows downward, and "clockwise" means a
/// positive shoelace area in that frame.
struct Polygon {
    std::vector<Point2> vertices;
};

/// Per-candidate head input: anchor point, offset scale, and the context
/// feature the offsets are generated from.
struct AnchorContext {
    Point2 anchor;
    double scale_x = 1.0;
    double scale_y = 1.0;
    TensorValue context_feature;
};

// --- point arithmetic -------------------------------------------------------

// p_i = anchor + scale (.) delta_i
PointSet scatter_points(const AnchorContext& ctx, std::span<const Point2> deltas);

// p'_i = p_i + offset_i (.) scale
PointSet refine_points(const PointSet& points, std::span<const Point2> offsets, double scale_x,
                       double scale_y);

// 4-neighbour blend on an H x W x C map; coordinates clamp to the map border.
std::vector<double> bilinear_sample(const TensorValue& fmap, Point2 p);

// Axis-aligned hull; the argmin/argmax convention (lowest index on ties)
// matches the differentiable box kernel.
BoxXYXY box_from_points(const PointSet& points);

// --- polygon machinery ------------------------------------------------------

double polygon_signed_area(const Polygon& poly);
double polygon_perimeter(const Polygon& poly);
bool polygon_is_clockwise(const Polygon& poly);
bool point_in_polygon(const Polygon& poly, Point2 p);
void validate_polygon(const Polygon& poly);

// Flips vertex order when needed so the shoelace area is positive.
Polygon orient_clockwise(const Polygon& poly);

// Adjusts the vertex count to exactly K: splits the longest edge at its
// midpoint while short, deletes the cheaper endpoint of the shortest edge
// while long. Ties break toward the lowest edge/vertex index.
Polygon resample_contour(const Polygon& poly, std::int64_t k);

// Clockwise targets for the K dispersible points: orients, resamples, then
// rotates the start vertex to the one whose direction from the anchor is
// closest to +x (ties resolved clockwise).
PointSet contour_targets(const Polygon& gt, std::int64_t k, Point2 anchor);

// --- initialization tables --------------------------------------------------

/// Initial offset-generator biases per task: four side groups for detection,
/// a uniform clockwise walk of the pseudo-box boundary for segmentation,
/// dataset mean offsets for pose, and a small seeded scatter for
/// classification.
std::vector<Point2> initial_bias_table(Task task, std::int64_t k,
                                       const std::vector<Point2>* dataset_stats = nullptr,
                                       std::uint64_t seed = 0);

} // namespace pointhead
