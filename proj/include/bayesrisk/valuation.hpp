#pragma once

// Risk as a value signal: per-frame percentiles, trajectory means, ranking
// and trajectory similarity.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bayesrisk/riskfield.hpp"

namespace bayesrisk {

struct FrameScore {
    std::size_t frame = 0;
    double value = 0.0;  // percentile of the valid pixels
    std::size_t valid_pixels = 0;
};

struct TrajectoryScore {
    std::string traj_id;
    double mean = 0.0;
    std::size_t frames = 0;
};

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value. p in (0, 100].
double nearest_rank_percentile(std::vector<double> values, double p);

// ScoringError when the frame has no valid pixel.
FrameScore frame_percentile(const RiskImage& risk, double p = 75.0, std::size_t frame = 0);

// Mean of the per-frame percentiles over the frames given; the caller picks
// the window. ScoringError when empty.
TrajectoryScore trajectory_score(const std::string& traj_id, const std::vector<RiskImage>& frames, double p = 75.0);
TrajectoryScore trajectory_score(const std::string& traj_id, const std::vector<FrameScore>& frames);

struct Ranking {
    std::vector<std::string> order;  // ascending risk
    std::string least_risky;
    std::string most_risky;
};

// Ascending by mean; ties broken by id (numerically when both ids are
// integers). ScoringError when empty.
Ranking rank_trajectories(const std::vector<TrajectoryScore>& scores);

// Classic DTW with Euclidean point cost and no window.
double dtw_distance(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b);
double dtw_distance(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b);

double median(std::vector<double> values);
// Mean of the smallest ceil(keep * n) values.
double trimmed_mean(std::vector<double> values, double keep = 0.95);

// traj_id,frames,mean_p75
void write_score_report(std::ostream& out, const std::vector<TrajectoryScore>& scores);

}  // namespace bayesrisk
