#include "bayesrisk/demos.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string_view>

#include <fmt/format.h>

#include "bayesrisk/errors.hpp"

namespace bayesrisk {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

template <typename T>
T parse_number(std::string_view token, std::size_t line_no, const char* what) {
    T value{};
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError(fmt::format("demo log: bad {} '{}'", what, token), line_no);
    }
    return value;
}

}  // namespace

DemoLog parse_demo_log(std::istream& in) {
    DemoLog log;
    std::string line;
    std::size_t line_no = 0;
    bool have_dim = false;
    std::map<std::string, std::size_t> group_index;
    std::vector<std::vector<DemoRecord>> groups;

    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "#dim") {
            if (tokens.size() != 2) throw ParseError("demo log: '#dim D' expected", line_no);
            log.dim = parse_number<std::size_t>(tokens[1], line_no, "dimension");
            if (log.dim == 0) throw ParseError("demo log: dimension must be positive", line_no);
            have_dim = true;
            continue;
        }
        if (tokens[0].front() == '#') continue;
        if (!have_dim) throw ParseError("demo log: record before '#dim' header", line_no);
        if (tokens.size() != 3 + 2 * log.dim) {
            throw SchemaError(fmt::format("demo log line {}: expected {} fields for dim {}, got {}", line_no,
                                          3 + 2 * log.dim, log.dim, tokens.size()));
        }
        DemoRecord rec;
        rec.traj_id = std::string(tokens[0]);
        rec.frame = parse_number<std::int64_t>(tokens[1], line_no, "frame");
        rec.distance = parse_number<double>(tokens[2], line_no, "distance");
        if (rec.frame < 0) throw ParseError("demo log: negative frame index", line_no);
        if (!std::isfinite(rec.distance) || rec.distance < 0.0) {
            throw ParseError("demo log: distance must be finite and non-negative", line_no);
        }
        rec.m_feat.resize(static_cast<Eigen::Index>(log.dim));
        rec.o_feat.resize(static_cast<Eigen::Index>(log.dim));
        for (std::size_t k = 0; k < log.dim; ++k) {
            rec.m_feat(static_cast<Eigen::Index>(k)) = parse_number<double>(tokens[3 + k], line_no, "feature");
            rec.o_feat(static_cast<Eigen::Index>(k)) =
                parse_number<double>(tokens[3 + log.dim + k], line_no, "feature");
        }
        auto [it, inserted] = group_index.try_emplace(rec.traj_id, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(std::move(rec));
    }

    for (auto& group : groups) {
        std::stable_sort(group.begin(), group.end(),
                         [](const DemoRecord& a, const DemoRecord& b) { return a.frame < b.frame; });
        std::move(group.begin(), group.end(), std::back_inserter(log.records));
    }
    return log;
}

DemoLog read_demo_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open demo log " + path.string());
    return parse_demo_log(in);
}

void write_demo_log(std::ostream& out, const DemoLog& log) {
    out << "#dim " << log.dim << '\n';
    for (const auto& rec : log.records) {
        if (static_cast<std::size_t>(rec.m_feat.size()) != log.dim ||
            static_cast<std::size_t>(rec.o_feat.size()) != log.dim) {
            throw SchemaError("demo record feature dimension does not match log dimension");
        }
        std::string line = fmt::format("{} {} {}", rec.traj_id, rec.frame, rec.distance);
        for (double v : rec.m_feat) line += fmt::format(" {}", v);
        for (double v : rec.o_feat) line += fmt::format(" {}", v);
        out << line << '\n';
    }
}

std::vector<Trajectory> group_trajectories(const std::vector<DemoRecord>& records) {
    std::vector<Trajectory> out;
    std::map<std::string, std::size_t> index;
    for (const auto& rec : records) {
        auto [it, inserted] = index.try_emplace(rec.traj_id, out.size());
        if (inserted) out.push_back({rec.traj_id, {}});
        out[it->second].records.push_back(rec);
    }
    for (auto& traj : out) {
        std::stable_sort(traj.records.begin(), traj.records.end(),
                         [](const DemoRecord& a, const DemoRecord& b) { return a.frame < b.frame; });
    }
    return out;
}

std::uint64_t TrajectoryHistogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

TrajectoryHistogram build_histogram(std::span<const DemoRecord> records, double d_max) {
    if (records.empty()) throw ContractViolation("build_histogram needs at least one record");
    if (!(d_max > 0.0)) throw DomainError("build_histogram: d_max must be positive");
    TrajectoryHistogram h;
    h.traj_id = records.front().traj_id;
    h.d_max = d_max;
    for (const auto& rec : records) {
        if (rec.traj_id != h.traj_id) {
            throw ContractViolation(fmt::format("build_histogram: mixed trajectories '{}' and '{}'", h.traj_id,
                                                rec.traj_id));
        }
        const double scaled = rec.distance / d_max * static_cast<double>(kHistogramBins);
        const auto bin = static_cast<std::size_t>(std::min(scaled, static_cast<double>(kHistogramBins - 1)));
        ++h.counts[bin];
    }
    return h;
}

EmpiricalCdf cdf_from_histogram(const TrajectoryHistogram& histogram) {
    EmpiricalCdf cdf;
    cdf.bin_edges.resize(kHistogramBins + 1);
    for (std::size_t k = 0; k <= kHistogramBins; ++k) {
        cdf.bin_edges[k] = histogram.d_max * static_cast<double>(k) / static_cast<double>(kHistogramBins);
    }
    cdf.values.assign(kHistogramBins, 0.0);
    const std::uint64_t total = histogram.total();
    if (total == 0) return cdf;
    std::uint64_t running = 0;
    for (std::size_t k = 0; k < kHistogramBins; ++k) {
        running += histogram.counts[k];
        cdf.values[k] = static_cast<double>(running) / static_cast<double>(total);
    }
    return cdf;
}

TrainingSet make_training_set(const std::vector<Trajectory>& trajectories, const TrainingSetOptions& options) {
    TrainingSet set;
    std::mt19937_64 rng(options.seed);
    for (const auto& traj : trajectories) {
        if (traj.records.empty()) {
            set.warnings.push_back(fmt::format("trajectory '{}' has no frames, skipped", traj.traj_id));
            continue;
        }
        const auto histogram = build_histogram(traj.records, options.d_max);
        const auto fit = fit_to_cdf(cdf_from_histogram(histogram), options.d_max);
        if (fit.warning) set.warnings.push_back(fmt::format("trajectory '{}': {}", traj.traj_id, *fit.warning));

        const std::size_t frames = traj.records.size();
        const std::size_t pool = frames * frames;
        std::vector<std::size_t> chosen;
        if (pool <= options.pairs_per_traj) {
            chosen.resize(pool);
            std::iota(chosen.begin(), chosen.end(), std::size_t{0});
        } else {
            std::vector<std::size_t> all(pool);
            std::iota(all.begin(), all.end(), std::size_t{0});
            std::sample(all.begin(), all.end(), std::back_inserter(chosen), options.pairs_per_traj, rng);
        }
        for (std::size_t index : chosen) {
            const auto& m_frame = traj.records[index / frames];
            const auto& o_frame = traj.records[index % frames];
            set.examples.push_back({m_frame.m_feat, o_frame.o_feat, fit.curve.control_points()});
        }
    }
    return set;
}

}  // namespace bayesrisk
