#include "pointhead/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pointhead/param_store.hpp"

namespace pointhead {

namespace {

constexpr double kAreaEps = 1e-12;
constexpr double kTwoPi = 6.283185307179586476925;

double dist(Point2 a, Point2 b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

} // namespace

const char* task_name(Task t) {
    switch (t) {
        case Task::Classification: return "classification";
        case Task::Detection: return "detection";
        case Task::Segmentation: return "segmentation";
        case Task::Pose: return "pose";
    }
    return "unknown";
}

Task task_from_name(const std::string& name) {
    if (name == "classification" || name == "cls") return Task::Classification;
    if (name == "detection" || name == "det") return Task::Detection;
    if (name == "segmentation" || name == "segm") return Task::Segmentation;
    if (name == "pose") return Task::Pose;
    throw ConfigError("unknown task '" + name + "'");
}

PointSet scatter_points(const AnchorContext& ctx, std::span<const Point2> deltas) {
    PointSet out;
    out.reserve(deltas.size());
    for (const Point2& d : deltas) {
        if (!std::isfinite(d.x) || !std::isfinite(d.y)) {
            throw NumericError("scatter_points: non-finite delta");
        }
        out.push_back({ctx.anchor.x + ctx.scale_x * d.x, ctx.anchor.y + ctx.scale_y * d.y});
    }
    return out;
}

PointSet refine_points(const PointSet& points, std::span<const Point2> offsets, double scale_x,
                       double scale_y) {
    if (points.size() != offsets.size()) {
        throw ContractError("refine_points: " + std::to_string(points.size()) + " points vs " +
                            std::to_string(offsets.size()) + " offsets");
    }
    PointSet out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.push_back({points[i].x + offsets[i].x * scale_x, points[i].y + offsets[i].y * scale_y});
    }
    return out;
}

std::vector<double> bilinear_sample(const TensorValue& fmap, Point2 p) {
    if (fmap.rank() != 3 || fmap.shape()[0] < 2 || fmap.shape()[1] < 2) {
        throw ShapeError("bilinear_sample: feature map must be H x W x C with H,W >= 2, got " +
                         fmap.shape_str());
    }
    const std::int64_t h = fmap.shape()[0], w = fmap.shape()[1], c = fmap.shape()[2];
    const double xc = std::clamp(p.x, 0.0, static_cast<double>(w - 1));
    const double yc = std::clamp(p.y, 0.0, static_cast<double>(h - 1));
    const std::int64_t x0 = std::min(static_cast<std::int64_t>(std::floor(xc)), w - 2);
    const std::int64_t y0 = std::min(static_cast<std::int64_t>(std::floor(yc)), h - 2);
    const double fx = xc - static_cast<double>(x0);
    const double fy = yc - static_cast<double>(y0);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    const double weights[4] = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
    const std::int64_t corners[4][2] = {{y0, x0}, {y0, x0 + 1}, {y0 + 1, x0}, {y0 + 1, x0 + 1}};
    for (int q = 0; q < 4; ++q) {
        const double* row = fmap.data() + (corners[q][0] * w + corners[q][1]) * c;
        for (std::int64_t ch = 0; ch < c; ++ch) {
            out[static_cast<std::size_t>(ch)] += weights[q] * row[ch];
        }
    }
    return out;
}

BoxXYXY box_from_points(const PointSet& points) {
    if (points.empty()) {
        throw ContractError("box_from_points: empty point set");
    }
    BoxXYXY b{points[0].x, points[0].y, points[0].x, points[0].y};
    for (const Point2& p : points) {
        b.x1 = std::min(b.x1, p.x);
        b.y1 = std::min(b.y1, p.y);
        b.x2 = std::max(b.x2, p.x);
        b.y2 = std::max(b.y2, p.y);
    }
    return b;
}

double polygon_signed_area(const Polygon& poly) {
    const auto& v = poly.vertices;
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point2& a = v[i];
        const Point2& b = v[(i + 1) % v.size()];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

double polygon_perimeter(const Polygon& poly) {
    const auto& v = poly.vertices;
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += dist(v[i], v[(i + 1) % v.size()]);
    }
    return acc;
}

bool polygon_is_clockwise(const Polygon& poly) {
    return polygon_signed_area(poly) > 0.0;
}

bool point_in_polygon(const Polygon& poly, Point2 p) {
    // Even-odd ray crossing toward +x.
    const auto& v = poly.vertices;
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const bool straddles = (v[i].y > p.y) != (v[j].y > p.y);
        if (straddles) {
            const double xcross = v[j].x + (v[i].x - v[j].x) * (p.y - v[j].y) / (v[i].y - v[j].y);
            if (p.x < xcross) inside = !inside;
        }
    }
    return inside;
}

void validate_polygon(const Polygon& poly) {
    if (poly.vertices.size() < 3) {
        throw ContractError("polygon needs at least 3 vertices, got " +
                            std::to_string(poly.vertices.size()));
    }
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point2& a = v[i];
        const Point2& b = v[(i + 1) % v.size()];
        if (!std::isfinite(a.x) || !std::isfinite(a.y)) {
            throw NumericError("polygon vertex is non-finite");
        }
        if (dist(a, b) < 1e-12) {
            throw ContractError("polygon has consecutive duplicate vertices at index " +
                                std::to_string(i));
        }
    }
}

Polygon orient_clockwise(const Polygon& poly) {
    validate_polygon(poly);
    const double area = polygon_signed_area(poly);
    if (std::abs(area) < kAreaEps) {
        throw DegeneracyError("orient_clockwise: polygon area is zero");
    }
    if (area > 0.0) {
        return poly;
    }
    Polygon flipped;
    flipped.vertices.assign(poly.vertices.rbegin(), poly.vertices.rend());
    return flipped;
}

Polygon resample_contour(const Polygon& poly, std::int64_t k) {
    if (k < 3) {
        throw ContractError("resample_contour: target count must be >= 3");
    }
    validate_polygon(poly);
    if (!polygon_is_clockwise(poly)) {
        throw ContractError("resample_contour: input polygon must be clockwise");
    }
    std::vector<Point2> v = poly.vertices;

    while (static_cast<std::int64_t>(v.size()) < k) {
        std::size_t longest = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double len = dist(v[i], v[(i + 1) % v.size()]);
            if (len > best) {
                best = len;
                longest = i;
            }
        }
        const Point2 a = v[longest];
        const Point2 b = v[(longest + 1) % v.size()];
        v.insert(v.begin() + static_cast<std::ptrdiff_t>(longest) + 1,
                 {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)});
    }

    while (static_cast<std::int64_t>(v.size()) > k) {
        const std::size_t n = v.size();
        std::size_t shortest = 0;
        double best = dist(v[0], v[1 % n]);
        for (std::size_t i = 1; i < n; ++i) {
            const double len = dist(v[i], v[(i + 1) % n]);
            if (len < best) {
                best = len;
                shortest = i;
            }
        }
        // Drop whichever endpoint of the shortest edge perturbs the perimeter
        // least; equal costs keep the lower vertex index.
        const std::size_t cand[2] = {shortest, (shortest + 1) % n};
        double delta[2];
        for (int q = 0; q < 2; ++q) {
            const std::size_t u = cand[q];
            const Point2& prev = v[(u + n - 1) % n];
            const Point2& next = v[(u + 1) % n];
            delta[q] = dist(prev, next) - dist(prev, v[u]) - dist(v[u], next);
        }
        std::size_t drop;
        if (delta[0] > delta[1]) {
            drop = cand[0];
        } else if (delta[1] > delta[0]) {
            drop = cand[1];
        } else {
            drop = std::min(cand[0], cand[1]);
        }
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(drop));
    }

    Polygon out{std::move(v)};
    return out;
}

PointSet contour_targets(const Polygon& gt, std::int64_t k, Point2 anchor) {
    const Polygon resampled = resample_contour(orient_clockwise(gt), k);
    const auto& v = resampled.vertices;

    bool any_offset = false;
    std::size_t start = 0;
    double best_dev = 0.0, best_cw = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double dx = v[i].x - anchor.x;
        const double dy = v[i].y - anchor.y;
        if (std::hypot(dx, dy) < 1e-12) continue;
        const double theta = std::atan2(dy, dx); // image frame: +y is clockwise from +x
        const double dev = std::abs(theta);
        const double cw = theta < 0.0 ? theta + kTwoPi : theta;
        if (!any_offset || dev < best_dev - 1e-15 ||
            (std::abs(dev - best_dev) <= 1e-15 && cw < best_cw)) {
            any_offset = true;
            start = i;
            best_dev = dev;
            best_cw = cw;
        }
    }
    if (!any_offset) {
        throw DegeneracyError("contour_targets: anchor coincides with every vertex");
    }

    PointSet out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(v[(start + i) % v.size()]);
    }
    return out;
}

std::vector<Point2> initial_bias_table(Task task, std::int64_t k,
                                       const std::vector<Point2>* dataset_stats,
                                       std::uint64_t seed) {
    if (k < 1) {
        throw ContractError("initial_bias_table: K must be >= 1");
    }
    std::vector<Point2> table;
    table.reserve(static_cast<std::size_t>(k));
    switch (task) {
        case Task::Detection: {
            if (k % 4 != 0) {
                throw ContractError("initial_bias_table: detection needs K divisible by 4, got " +
                                    std::to_string(k));
            }
            const Point2 sides[4] = {{-0.5, 0.0}, {0.5, 0.0}, {0.0, -0.5}, {0.0, 0.5}};
            for (int s = 0; s < 4; ++s) {
                for (std::int64_t i = 0; i < k / 4; ++i) table.push_back(sides[s]);
            }
            break;
        }
        case Task::Segmentation: {
            // Clockwise walk of the [-0.5, 0.5]^2 pseudo-box boundary starting
            // at (+0.5, 0); total perimeter 4.
            for (std::int64_t i = 0; i < k; ++i) {
                double t = 4.0 * static_cast<double>(i) / static_cast<double>(k);
                Point2 p;
                if (t < 0.5) {
                    p = {0.5, t};
                } else if (t < 1.5) {
                    p = {0.5 - (t - 0.5), 0.5};
                } else if (t < 2.5) {
                    p = {-0.5, 0.5 - (t - 1.5)};
                } else if (t < 3.5) {
                    p = {-0.5 + (t - 2.5), -0.5};
                } else {
                    p = {0.5, -0.5 + (t - 3.5)};
                }
                table.push_back(p);
            }
            break;
        }
        case Task::Pose: {
            if (dataset_stats == nullptr ||
                static_cast<std::int64_t>(dataset_stats->size()) != k) {
                throw ContractError("initial_bias_table: pose needs dataset stats with K entries");
            }
            table = *dataset_stats;
            break;
        }
        case Task::Classification: {
            std::mt19937_64 rng(mix_seed(seed, fnv1a("bias.classification")));
            std::uniform_real_distribution<double> dist(-0.1, 0.1);
            for (std::int64_t i = 0; i < k; ++i) {
                const double x = dist(rng);
                const double y = dist(rng);
                table.push_back({x, y});
            }
            break;
        }
    }
    return table;
}

} // namespace pointhead
