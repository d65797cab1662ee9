#include "bayesrisk/valuation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>

#include <fmt/format.h>

#include "bayesrisk/errors.hpp"

namespace bayesrisk {

namespace {

std::optional<long long> as_integer(const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool id_less(const std::string& a, const std::string& b) {
    const auto ia = as_integer(a), ib = as_integer(b);
    if (ia && ib && *ia != *ib) return *ia < *ib;
    return a < b;
}

template <typename Point>
double dtw(const std::vector<Point>& a, const std::vector<Point>& b) {
    if (a.empty() || b.empty()) throw DomainError("dtw: sequences must be non-empty");
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            if (a[i - 1].size() != b[j - 1].size()) throw SchemaError("dtw: point dimensions differ");
            const double cost = (a[i - 1] - b[j - 1]).norm();
            cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

}  // namespace

double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ScoringError("percentile of an empty set");
    if (!(p > 0.0 && p <= 100.0)) throw DomainError(fmt::format("percentile {} outside (0, 100]", p));
    const auto n = static_cast<double>(values.size());
    const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p / 100.0 * n)));
    const auto k = std::min(rank, values.size()) - 1;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

FrameScore frame_percentile(const RiskImage& risk, double p, std::size_t frame) {
    auto values = risk.valid_values();
    if (values.empty()) throw ScoringError(fmt::format("frame {} has no valid pixels", frame));
    const std::size_t n = values.size();
    return {frame, nearest_rank_percentile(std::move(values), p), n};
}

TrajectoryScore trajectory_score(const std::string& traj_id, const std::vector<FrameScore>& frames) {
    if (frames.empty()) throw ScoringError(fmt::format("trajectory {} has no frames", traj_id));
    double sum = 0.0;
    for (const auto& f : frames) sum += f.value;
    return {traj_id, sum / static_cast<double>(frames.size()), frames.size()};
}

TrajectoryScore trajectory_score(const std::string& traj_id, const std::vector<RiskImage>& frames, double p) {
    std::vector<FrameScore> scores;
    for (std::size_t i = 0; i < frames.size(); ++i) scores.push_back(frame_percentile(frames[i], p, i));
    return trajectory_score(traj_id, scores);
}

Ranking rank_trajectories(const std::vector<TrajectoryScore>& scores) {
    if (scores.empty()) throw ScoringError("nothing to rank");
    std::vector<const TrajectoryScore*> sorted;
    for (const auto& s : scores) sorted.push_back(&s);
    std::stable_sort(sorted.begin(), sorted.end(), [](const TrajectoryScore* a, const TrajectoryScore* b) {
        if (a->mean != b->mean) return a->mean < b->mean;
        return id_less(a->traj_id, b->traj_id);
    });
    Ranking r;
    for (const auto* s : sorted) r.order.push_back(s->traj_id);
    r.least_risky = r.order.front();
    r.most_risky = r.order.back();
    return r;
}

double dtw_distance(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) { return dtw(a, b); }
double dtw_distance(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) { return dtw(a, b); }

double median(std::vector<double> values) {
    if (values.empty()) throw ScoringError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double trimmed_mean(std::vector<double> values, double keep) {
    if (values.empty()) throw ScoringError("trimmed mean of an empty set");
    if (!(keep > 0.0 && keep <= 1.0)) throw DomainError("trimmed mean keep fraction must be in (0, 1]");
    std::sort(values.begin(), values.end());
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(keep * static_cast<double>(values.size()))));
    return std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

void write_score_report(std::ostream& out, const std::vector<TrajectoryScore>& scores) {
    out << "traj_id,frames,mean_p75\n";
    for (const auto& s : scores) out << fmt::format("{},{},{:.6f}\n", s.traj_id, s.frames, s.mean);
}

}  // namespace bayesrisk
