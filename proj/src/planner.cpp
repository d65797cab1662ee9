#include "bayesrisk/planner.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

#include "bayesrisk/errors.hpp"

namespace bayesrisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using CellKey = std::array<std::int64_t, 3>;

CellKey cell_of(const Point3& p, double size) {
    return {static_cast<std::int64_t>(std::floor(p.x() / size)), static_cast<std::int64_t>(std::floor(p.y() / size)),
            static_cast<std::int64_t>(std::floor(p.z() / size))};
}

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = 1469598103934665603ull;
        for (auto v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ull;
        return static_cast<std::size_t>(h);
    }
};

double ball_clearance(const Point3& a, const Point3& b, const BallObstacle& ball) {
    return segment_point_distance(a, b, ball.center) - ball.radius;
}

// Uniform-grid bucketing of balls for segment clearance queries. Balls that
// would span too many cells are kept in a list that every query scans.
class BallIndex {
public:
    explicit BallIndex(const std::vector<BallObstacle>& balls, double resolution) : balls_(balls) {
        if (balls.empty()) return;
        double mean_r = 0.0;
        for (const auto& b : balls) mean_r += b.radius;
        mean_r /= static_cast<double>(balls.size());
        cell_ = std::max(2.0 * resolution, mean_r);
        for (std::uint32_t i = 0; i < balls.size(); ++i) {
            const auto& b = balls[i];
            const CellKey lo = cell_of(b.center - Point3::Constant(b.radius), cell_);
            const CellKey hi = cell_of(b.center + Point3::Constant(b.radius), cell_);
            const std::int64_t span = (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1);
            if (span > 512) {
                big_.push_back(i);
                continue;
            }
            for (auto x = lo[0]; x <= hi[0]; ++x)
                for (auto y = lo[1]; y <= hi[1]; ++y)
                    for (auto z = lo[2]; z <= hi[2]; ++z) cells_[{x, y, z}].push_back(i);
        }
        stamp_.assign(balls.size(), 0);
    }

    // True when every ball keeps clearance >= threshold from [a, b].
    bool segment_clear(const Point3& a, const Point3& b, double threshold) const {
        if (balls_.empty()) return true;
        if (threshold == kInf) return false;
        const double pad = std::max(threshold, 0.0);
        const CellKey lo = cell_of(a.cwiseMin(b) - Point3::Constant(pad), cell_);
        const CellKey hi = cell_of(a.cwiseMax(b) + Point3::Constant(pad), cell_);
        const std::int64_t span = (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1);
        if (span > 4096 || span <= 0) {
            for (const auto& ball : balls_)
                if (ball_clearance(a, b, ball) < threshold) return false;
            return true;
        }
        for (auto i : big_)
            if (ball_clearance(a, b, balls_[i]) < threshold) return false;
        ++epoch_;
        for (auto x = lo[0]; x <= hi[0]; ++x)
            for (auto y = lo[1]; y <= hi[1]; ++y)
                for (auto z = lo[2]; z <= hi[2]; ++z) {
                    const auto it = cells_.find({x, y, z});
                    if (it == cells_.end()) continue;
                    for (auto i : it->second) {
                        if (stamp_[i] == epoch_) continue;
                        stamp_[i] = epoch_;
                        if (ball_clearance(a, b, balls_[i]) < threshold) return false;
                    }
                }
        return true;
    }

    bool point_free(const Point3& p) const { return segment_clear(p, p, 0.0); }

private:
    const std::vector<BallObstacle>& balls_;
    double cell_ = 1.0;
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> cells_;
    std::vector<std::uint32_t> big_;
    mutable std::vector<std::uint64_t> stamp_;
    mutable std::uint64_t epoch_ = 0;
};

bool inside_bounds(const Point3& p, const PlannerConfig& cfg) {
    return (p.array() >= cfg.bounds_min.array()).all() && (p.array() <= cfg.bounds_max.array()).all();
}

struct Lattice {
    Point3 origin;
    double res = 0.0;
    std::array<std::int64_t, 3> lo{}, n{};

    std::int64_t total() const { return n[0] * n[1] * n[2]; }
    bool contains(const std::array<std::int64_t, 3>& ijk) const {
        for (int a = 0; a < 3; ++a)
            if (ijk[a] < lo[a] || ijk[a] >= lo[a] + n[a]) return false;
        return true;
    }
    std::int64_t index(const std::array<std::int64_t, 3>& ijk) const {
        return ((ijk[0] - lo[0]) * n[1] + (ijk[1] - lo[1])) * n[2] + (ijk[2] - lo[2]);
    }
    std::array<std::int64_t, 3> coords(std::int64_t idx) const {
        const std::int64_t k = idx % n[2];
        const std::int64_t j = (idx / n[2]) % n[1];
        const std::int64_t i = idx / (n[1] * n[2]);
        return {i + lo[0], j + lo[1], k + lo[2]};
    }
    Point3 position(const std::array<std::int64_t, 3>& ijk) const {
        return origin + res * Point3(static_cast<double>(ijk[0]), static_cast<double>(ijk[1]), static_cast<double>(ijk[2]));
    }
};

std::vector<Point3> shortcut(const std::vector<Point3>& w, const BallIndex& index, double threshold) {
    std::vector<Point3> out{w.front()};
    std::size_t i = 0;
    while (i + 1 < w.size()) {
        std::size_t j = w.size() - 1;
        while (j > i + 1 && !index.segment_clear(w[i], w[j], threshold)) --j;
        out.push_back(w[j]);
        i = j;
    }
    return out;
}

std::vector<Point3> chaikin(const std::vector<Point3>& w, const BallIndex& index, double threshold) {
    if (w.size() < 3) return w;
    std::vector<Point3> out{w.front()};
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const Point3 q = 0.75 * w[i] + 0.25 * w[i + 1];
        const Point3 r = 0.25 * w[i] + 0.75 * w[i + 1];
        // Corner at w[i] is cut by the segment previous-r -> q.
        if (i > 0 && !index.segment_clear(out.back(), q, threshold)) out.push_back(w[i]);
        out.push_back(q);
        out.push_back(r);
    }
    out.push_back(w.back());
    std::vector<Point3> dedup;
    for (const auto& p : out)
        if (dedup.empty() || p != dedup.back()) dedup.push_back(p);
    return dedup;
}

}  // namespace

double Path::length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) s += (waypoints[i] - waypoints[i - 1]).norm();
    return s;
}

double segment_point_distance(const Point3& a, const Point3& b, const Point3& p) {
    const Point3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

double extract_radius(const PosteriorCurve& curve, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("viability threshold must lie in [0, 1]");
    const auto& v = curve.values();
    const auto& d = curve.distances();
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[i - 1] - 1e-12) throw ContractViolation("extract_radius: posterior curve is not monotone");
    if (curve.viability_exact(0.0) >= alpha) return 0.0;
    std::size_t i = 0;
    while (i < v.size() && v[i] < alpha) ++i;
    if (i == v.size()) return curve.d_max();
    double lo = d[i - 1], hi = d[i];
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (curve.viability_exact(mid) >= alpha ? hi : lo) = mid;
    }
    return hi;
}

std::vector<BallObstacle> inflate_point_cloud(const std::vector<Point3>& points, const std::vector<double>& radii,
                                              double voxel, const std::vector<std::string>& contexts) {
    if (!(voxel > 0.0)) throw ConfigError("voxel size must be positive");
    if (radii.size() != points.size() || (!contexts.empty() && contexts.size() != points.size()))
        throw ContractViolation("inflate_point_cloud: points, radii and contexts must align");
    std::map<CellKey, std::size_t> best;  // voxel -> representative point
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!points[i].allFinite() || !std::isfinite(radii[i]) || radii[i] < 0.0)
            throw DomainError("inflate_point_cloud: non-finite point or negative radius");
        const auto [it, inserted] = best.emplace(cell_of(points[i], voxel), i);
        if (!inserted && radii[i] > radii[it->second]) it->second = i;
    }
    std::vector<BallObstacle> out;
    out.reserve(best.size());
    for (const auto& [key, i] : best) out.push_back({points[i], radii[i], contexts.empty() ? std::string() : contexts[i]});
    return out;
}

std::vector<BallObstacle> inflate_point_cloud(const std::vector<Point3>& points,
                                              const std::vector<std::size_t>& curve_index,
                                              const std::vector<PosteriorCurve>& curves, double alpha, double voxel) {
    if (curve_index.size() != points.size()) throw ContractViolation("inflate_point_cloud: one curve index per point");
    std::vector<double> curve_radius;
    for (const auto& c : curves) curve_radius.push_back(extract_radius(c, alpha));
    std::vector<double> radii;
    std::vector<std::string> contexts;
    for (auto ci : curve_index) {
        if (ci >= curves.size()) throw ContractViolation("inflate_point_cloud: curve index out of range");
        radii.push_back(curve_radius[ci]);
        contexts.push_back(curves[ci].context().matched);
    }
    return inflate_point_cloud(points, radii, voxel, contexts);
}

void PlannerConfig::validate() const {
    if (!(resolution > 0.0)) throw ConfigError("planner resolution must be positive");
    if (!(bounds_min.array() < bounds_max.array()).all()) throw ConfigError("planner bounds must satisfy min < max");
    if (max_lattice_nodes == 0) throw ConfigError("planner lattice node cap must be positive");
}

double path_clearance(const Path& path, const std::vector<BallObstacle>& obstacles) {
    double best = kInf;
    if (path.waypoints.empty()) return best;
    for (const auto& ball : obstacles) {
        if (path.waypoints.size() == 1) best = std::min(best, ball_clearance(path.waypoints[0], path.waypoints[0], ball));
        for (std::size_t i = 1; i < path.waypoints.size(); ++i)
            best = std::min(best, ball_clearance(path.waypoints[i - 1], path.waypoints[i], ball));
    }
    return best;
}

Path shortcut_path(const Path& path, const std::vector<BallObstacle>& obstacles) {
    if (path.waypoints.size() < 2) return path;
    const BallIndex index(obstacles, 0.02);
    return Path{shortcut(path.waypoints, index, path_clearance(path, obstacles))};
}

Path plan(const Point3& start, const Point3& goal, const std::vector<BallObstacle>& obstacles,
          const PlannerConfig& cfg) {
    cfg.validate();
    if (!start.allFinite() || !goal.allFinite()) throw InfeasibleInput("start and goal must be finite");
    if (!inside_bounds(start, cfg) || !inside_bounds(goal, cfg)) throw InfeasibleInput("start or goal outside the planning bounds");
    const BallIndex index(obstacles, cfg.resolution);
    if (!index.point_free(start)) throw InfeasibleInput("start lies inside an obstacle ball");
    if (!index.point_free(goal)) throw InfeasibleInput("goal lies inside an obstacle ball");

    Lattice lat;
    lat.origin = start;
    lat.res = cfg.resolution;
    for (int a = 0; a < 3; ++a) {
        lat.lo[a] = static_cast<std::int64_t>(std::ceil((cfg.bounds_min[a] - start[a]) / cfg.resolution - 1e-9));
        const auto hi = static_cast<std::int64_t>(std::floor((cfg.bounds_max[a] - start[a]) / cfg.resolution + 1e-9));
        lat.n[a] = hi - lat.lo[a] + 1;
    }
    if (lat.total() <= 0 || static_cast<std::uint64_t>(lat.total()) > cfg.max_lattice_nodes)
        throw ConfigError(fmt::format("planning lattice would have {} nodes", lat.total()));

    // Lattice nodes that can see the goal directly.
    std::array<std::int64_t, 3> g0{};
    for (int a = 0; a < 3; ++a) g0[a] = std::llround((goal[a] - start[a]) / cfg.resolution);
    std::unordered_map<std::int64_t, double> exits;
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz) {
                const std::array<std::int64_t, 3> c{g0[0] + dx, g0[1] + dy, g0[2] + dz};
                if (!lat.contains(c)) continue;
                const Point3 p = lat.position(c);
                if (index.point_free(p) && index.segment_clear(p, goal, 0.0)) exits.emplace(lat.index(c), (goal - p).norm());
            }
    if (exits.empty()) throw NoPathError("goal is not reachable from any neighbouring lattice node");

    const auto n_total = static_cast<std::size_t>(lat.total());
    std::vector<double> g(n_total, kInf);
    std::vector<std::int64_t> parent(n_total, -1);
    std::vector<std::uint8_t> state(n_total, 0);  // bit0 closed, bit1 checked, bit2 free
    const auto is_free = [&](std::int64_t idx) {
        auto& s = state[static_cast<std::size_t>(idx)];
        if (!(s & 2)) s |= static_cast<std::uint8_t>(2 | (index.point_free(lat.position(lat.coords(idx))) ? 4 : 0));
        return (s & 4) != 0;
    };

    using Entry = std::tuple<double, std::int64_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    const std::int64_t s_idx = lat.index({0, 0, 0});
    g[static_cast<std::size_t>(s_idx)] = 0.0;
    open.emplace((goal - start).norm(), s_idx);
    std::int64_t reached = -1;
    while (!open.empty()) {
        const auto [f, idx] = open.top();
        open.pop();
        auto& st = state[static_cast<std::size_t>(idx)];
        if (st & 1) continue;
        st |= 1;
        if (const auto e = exits.find(idx); e != exits.end() && f >= g[static_cast<std::size_t>(idx)] + e->second - 1e-12) {
            reached = idx;
            break;
        }
        const auto c = lat.coords(idx);
        const Point3 p = lat.position(c);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    if (!dx && !dy && !dz) continue;
                    const std::array<std::int64_t, 3> nc{c[0] + dx, c[1] + dy, c[2] + dz};
                    if (!lat.contains(nc)) continue;
                    const std::int64_t nidx = lat.index(nc);
                    if (state[static_cast<std::size_t>(nidx)] & 1 || !is_free(nidx)) continue;
                    const Point3 q = lat.position(nc);
                    const double ng = g[static_cast<std::size_t>(idx)] + (q - p).norm();
                    if (ng >= g[static_cast<std::size_t>(nidx)]) continue;
                    if (!index.segment_clear(p, q, 0.0)) continue;
                    g[static_cast<std::size_t>(nidx)] = ng;
                    parent[static_cast<std::size_t>(nidx)] = idx;
                    const auto e = exits.find(nidx);
                    open.emplace(ng + (e != exits.end() ? e->second : (goal - q).norm()), nidx);
                }
    }
    if (reached < 0) throw NoPathError("no collision-free lattice path between start and goal");

    std::vector<Point3> lattice_path;
    for (std::int64_t idx = reached; idx >= 0; idx = parent[static_cast<std::size_t>(idx)])
        lattice_path.push_back(lat.position(lat.coords(idx)));
    std::reverse(lattice_path.begin(), lattice_path.end());
    lattice_path.front() = start;
    if (lattice_path.back() != goal) lattice_path.push_back(goal);
    if (lattice_path.size() == 1) lattice_path.push_back(goal);

    const double lattice_clearance = path_clearance(Path{lattice_path}, obstacles);
    std::vector<Point3> w = shortcut(lattice_path, index, lattice_clearance);
    for (std::size_t it = 0; it < cfg.smoothing_iterations; ++it) {
        const double floor = path_clearance(Path{w}, obstacles);
        w = chaikin(w, index, floor);
    }
    if (w.size() == 1) w.push_back(goal);
    return Path{std::move(w)};
}

// ---- scene assembly -------------------------------------------------------

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0 && fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy))
        throw ConfigError("camera intrinsics need positive fx, fy and finite cx, cy");
}

std::vector<CloudPoint> back_project(const DistanceImage& depth, const CameraIntrinsics& intrinsics) {
    intrinsics.validate();
    std::vector<CloudPoint> out;
    for (std::size_t v = 0; v < depth.height; ++v)
        for (std::size_t u = 0; u < depth.width; ++u) {
            const std::size_t i = v * depth.width + u;
            if (!depth.valid(i)) continue;
            const double z = depth.data[i];
            out.push_back({Point3((static_cast<double>(u) - intrinsics.cx) * z / intrinsics.fx,
                                  (static_cast<double>(v) - intrinsics.cy) * z / intrinsics.fy, z),
                           i});
        }
    return out;
}

std::vector<BallObstacle> scene_obstacles(const LikelihoodModel& model, const ObjectLut& object_lut,
                                          const RiskLut& risk_lut, const std::string& manipulated,
                                          const Feature& manip_feat, const FeatureImage& features,
                                          const DistanceImage& depth, const CameraIntrinsics& intrinsics,
                                          const SceneObstacleOptions& options) {
    if (features.height != depth.height || features.width != depth.width)
        throw SchemaError("feature image and depth image sizes differ");
    const auto cloud = back_project(depth, intrinsics);
    std::unordered_map<std::string, std::size_t> memo;
    std::vector<PosteriorCurve> curves;
    std::vector<Point3> points;
    std::vector<std::size_t> curve_index;
    const std::size_t bytes = features.dim * sizeof(double);
    for (const auto& cp : cloud) {
        std::string key(reinterpret_cast<const char*>(features.data.data() + cp.pixel * features.dim), bytes);
        auto it = memo.find(key);
        if (it == memo.end()) {
            const Feature f = features.pixel(cp.pixel / features.width, cp.pixel % features.width);
            curves.push_back(posterior_curve(model, object_lut, risk_lut, manipulated, manip_feat, f, options.attenuation));
            it = memo.emplace(std::move(key), curves.size() - 1).first;
        }
        points.push_back(cp.position);
        curve_index.push_back(it->second);
    }
    return inflate_point_cloud(points, curve_index, curves, options.alpha, options.voxel);
}

// ---- text files -----------------------------------------------------------

namespace {

std::vector<double> parse_numbers(const std::string& line, std::size_t line_no, std::size_t expected, const char* what) {
    std::istringstream in(line);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
            throw ParseError(fmt::format("{}: bad number '{}'", what, tok), line_no);
        out.push_back(v);
    }
    if (out.size() != expected) throw ParseError(fmt::format("{}: expected {} numbers", what, expected), line_no);
    return out;
}

bool skippable(const std::string& line) {
    const auto p = line.find_first_not_of(" \t\r");
    return p == std::string::npos || line[p] == '#';
}

}  // namespace

std::vector<BallObstacle> parse_obstacles(std::istream& in) {
    std::vector<BallObstacle> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (skippable(line)) continue;
        const auto v = parse_numbers(line, line_no, 4, "obstacles");
        if (v[3] < 0.0) throw ParseError("obstacles: negative radius", line_no);
        out.push_back({Point3(v[0], v[1], v[2]), v[3], {}});
    }
    return out;
}

void write_obstacles(std::ostream& out, const std::vector<BallObstacle>& obstacles) {
    for (const auto& b : obstacles) out << fmt::format("{} {} {} {}\n", b.center.x(), b.center.y(), b.center.z(), b.radius);
}

Path parse_path(std::istream& in) {
    Path path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (skippable(line)) continue;
        const auto v = parse_numbers(line, line_no, 3, "path");
        path.waypoints.emplace_back(v[0], v[1], v[2]);
    }
    return path;
}

void write_path(std::ostream& out, const Path& path) {
    for (const auto& p : path.waypoints) out << fmt::format("{} {} {}\n", p.x(), p.y(), p.z());
}

}  // namespace bayesrisk
