#pragma once

// Demonstration logs -> per-trajectory distance histograms -> empirical CDFs
// -> Bezier targets paired with sampled feature pairs.
//
// Log format (text):
//     #dim D
//     traj_id frame distance m_0 .. m_{D-1} o_0 .. o_{D-1}
// One line per frame. m is the manipulated-object feature averaged over its
// mask for that frame, o the central-object feature, distance in meters.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bayesrisk/bezier.hpp"
#include "bayesrisk/types.hpp"

namespace bayesrisk {

struct DemoRecord {
    std::string traj_id;
    std::int64_t frame = 0;
    double distance = 0.0;
    Feature m_feat;
    Feature o_feat;
};

struct Trajectory {
    std::string traj_id;
    std::vector<DemoRecord> records;  // frames ascending
};

struct DemoLog {
    std::size_t dim = 0;
    std::vector<DemoRecord> records;  // grouped by traj_id in first-seen order, frames ascending
};

DemoLog parse_demo_log(std::istream& in);
DemoLog read_demo_log(const std::filesystem::path& path);
void write_demo_log(std::ostream& out, const DemoLog& log);

std::vector<Trajectory> group_trajectories(const std::vector<DemoRecord>& records);

struct TrajectoryHistogram {
    std::string traj_id;
    std::array<std::uint64_t, kHistogramBins> counts{};
    double d_max = kDefaultDMax;

    std::uint64_t total() const;
};

// Equal-width bins on [0, d_max]; distances >= d_max land in the last bin.
TrajectoryHistogram build_histogram(std::span<const DemoRecord> records, double d_max = kDefaultDMax);

EmpiricalCdf cdf_from_histogram(const TrajectoryHistogram& histogram);

struct TrainingExample {
    Feature feat_a;
    Feature feat_b;
    ControlPoints target{};
};

struct TrainingSetOptions {
    std::size_t pairs_per_traj = 100;
    std::uint64_t seed = 0;
    double d_max = kDefaultDMax;
};

struct TrainingSet {
    std::vector<TrainingExample> examples;
    std::vector<std::string> warnings;
};

// For each trajectory with L frames, samples min(pairs_per_traj, L^2) distinct
// (m-feature of frame i, o-feature of frame j) pairs and attaches the
// trajectory's fitted Bezier control points as the target.
TrainingSet make_training_set(const std::vector<Trajectory>& trajectories, const TrainingSetOptions& options = {});

}  // namespace bayesrisk
