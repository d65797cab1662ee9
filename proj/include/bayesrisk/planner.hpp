#pragma once

// Risk-aware path planning: viability-threshold radii, ball obstacles around
// the scene point cloud, lattice A* with shortcutting and corner smoothing.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bayesrisk/riskfield.hpp"

namespace bayesrisk {

using Point3 = Eigen::Vector3d;

struct BallObstacle {
    Point3 center = Point3::Zero();
    double radius = 0.0;
    std::string context;  // matched category the radius came from, may be empty
};

struct Path {
    std::vector<Point3> waypoints;
    double length() const;
};

// Smallest d with v(d) >= alpha: first grid point reaching alpha, refined by
// bisection on the exact factors inside the bracketing grid cell. 0 when
// v(0) >= alpha, d_max when alpha is never reached. ContractViolation when the
// tabulated curve decreases.
double extract_radius(const PosteriorCurve& curve, double alpha = 0.1);

// One ball per occupied voxel (cell index floor(p / voxel)), centred on the
// voxel's largest-radius point and carrying that radius. Output is sorted by
// voxel index.
std::vector<BallObstacle> inflate_point_cloud(const std::vector<Point3>& points, const std::vector<double>& radii,
                                              double voxel, const std::vector<std::string>& contexts = {});

// Points tagged with an index into `curves`; radii are extracted once per curve.
std::vector<BallObstacle> inflate_point_cloud(const std::vector<Point3>& points,
                                              const std::vector<std::size_t>& curve_index,
                                              const std::vector<PosteriorCurve>& curves, double alpha, double voxel);

struct PlannerConfig {
    double resolution = 0.02;
    Point3 bounds_min = Point3::Constant(-1.0);
    Point3 bounds_max = Point3::Constant(1.0);
    std::size_t smoothing_iterations = 3;
    std::size_t max_lattice_nodes = 50'000'000;

    void validate() const;
};

// 26-connected A* on a lattice anchored at `start`; nodes and edges must keep
// non-negative clearance to every ball. The lattice path is joined to the
// goal, shortcut greedily without lowering its minimum clearance, and
// Chaikin-smoothed where the cut corners keep that clearance.
// InfeasibleInput when start/goal lie inside a ball or outside the bounds;
// NoPathError when the lattice offers no route.
Path plan(const Point3& start, const Point3& goal, const std::vector<BallObstacle>& obstacles,
          const PlannerConfig& cfg = {});

// Greedy shortcutting: from each kept waypoint jump to the farthest later one
// whose segment keeps clearance >= the input path's minimum clearance.
Path shortcut_path(const Path& path, const std::vector<BallObstacle>& obstacles);

// Minimum over the path of (distance to centre - radius), computed exactly per
// segment. +infinity without obstacles.
double path_clearance(const Path& path, const std::vector<BallObstacle>& obstacles);

// Exact distance from p to the segment [a, b].
double segment_point_distance(const Point3& a, const Point3& b, const Point3& p);

// ---- scene assembly -------------------------------------------------------

struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    void validate() const;
};

struct CloudPoint {
    Point3 position;
    std::size_t pixel = 0;  // row-major index into the depth image
};

// Pinhole back-projection of every valid depth pixel (depth along the optical
// axis): X = (u - cx) z / fx, Y = (v - cy) z / fy, Z = z.
std::vector<CloudPoint> back_project(const DistanceImage& depth, const CameraIntrinsics& intrinsics);

struct SceneObstacleOptions {
    double alpha = 0.1;
    double voxel = 0.02;
    AttenuationConfig attenuation;
};

// Back-projects the depth image, evaluates each pixel's posterior curve from
// its feature and turns the cloud into balls.
std::vector<BallObstacle> scene_obstacles(const LikelihoodModel& model, const ObjectLut& object_lut,
                                          const RiskLut& risk_lut, const std::string& manipulated,
                                          const Feature& manip_feat, const FeatureImage& features,
                                          const DistanceImage& depth, const CameraIntrinsics& intrinsics,
                                          const SceneObstacleOptions& options = {});

// ---- text files -----------------------------------------------------------

// `x y z r` per line.
std::vector<BallObstacle> parse_obstacles(std::istream& in);
void write_obstacles(std::ostream& out, const std::vector<BallObstacle>& obstacles);
// `x y z` per line.
Path parse_path(std::istream& in);
void write_path(std::ostream& out, const Path& path);

}  // namespace bayesrisk
