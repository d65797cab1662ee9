#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "bayesrisk/demos.hpp"
#include "bayesrisk/errors.hpp"

using namespace bayesrisk;

namespace {

DemoRecord record(const std::string& traj, std::int64_t frame, double distance, double m = 0.0, double o = 0.0) {
    DemoRecord r;
    r.traj_id = traj;
    r.frame = frame;
    r.distance = distance;
    r.m_feat = Feature::Constant(2, m);
    r.o_feat = Feature::Constant(2, o);
    return r;
}

Trajectory trajectory_with_frames(const std::string& id, int frames) {
    Trajectory t{id, {}};
    for (int f = 0; f < frames; ++f) t.records.push_back(record(id, f, 0.01 * f, f, 1000.0 + f));
    return t;
}

}  // namespace

TEST_CASE("parse_demo_log basics") {
    std::istringstream empty("");
    CHECK(parse_demo_log(empty).records.empty());

    std::istringstream three(
        "#dim 2\n"
        "a 1 0.5 1 2 3 4\n"
        "b 0 0.25 -1 -2 -3 -4\n"
        "a 0 0.125 5 6 7 8\n");
    const auto log = parse_demo_log(three);
    REQUIRE(log.records.size() == 3);
    CHECK(log.dim == 2);
    // grouped by trajectory (first-seen order), frames ascending
    CHECK(log.records[0].traj_id == "a");
    CHECK(log.records[0].frame == 0);
    CHECK(log.records[0].distance == 0.125);
    CHECK(log.records[0].m_feat(1) == 6.0);
    CHECK(log.records[0].o_feat(0) == 7.0);
    CHECK(log.records[1].frame == 1);
    CHECK(log.records[1].distance == 0.5);
    CHECK(log.records[2].traj_id == "b");
    CHECK(log.records[2].o_feat(1) == -4.0);

    std::ostringstream out;
    write_demo_log(out, log);
    std::istringstream again(out.str());
    const auto reread = parse_demo_log(again);
    REQUIRE(reread.records.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(reread.records[i].traj_id == log.records[i].traj_id);
        CHECK(reread.records[i].distance == log.records[i].distance);
        CHECK(reread.records[i].m_feat == log.records[i].m_feat);
        CHECK(reread.records[i].o_feat == log.records[i].o_feat);
    }
}

TEST_CASE("parse_demo_log errors carry line numbers") {
    std::istringstream bad_number("#dim 1\na 0 0.1 1 2\na 1 zz 1 2\n");
    try {
        parse_demo_log(bad_number);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream wrong_dim("#dim 2\na 0 0.1 1 2 3\n");
    CHECK_THROWS_AS(parse_demo_log(wrong_dim), SchemaError);
    std::istringstream no_header("a 0 0.1 1 2\n");
    CHECK_THROWS_AS(parse_demo_log(no_header), ParseError);
    std::istringstream negative("#dim 1\na 0 -0.1 1 2\n");
    CHECK_THROWS_AS(parse_demo_log(negative), ParseError);
    CHECK_THROWS_AS(read_demo_log("/nonexistent/demo.log"), IoError);
}

TEST_CASE("build_histogram") {
    const std::vector<DemoRecord> single{record("t", 0, 0.0)};
    const auto h = build_histogram(single, 2.0);
    CHECK(h.counts[0] == 1);
    CHECK(h.total() == 1);

    std::vector<DemoRecord> centers;
    for (int k = 0; k < 100; ++k) centers.push_back(record("t", k, (k + 0.5) * 2.0 / 100));
    const auto ones = build_histogram(centers, 2.0);
    for (auto c : ones.counts) CHECK(c == 1);

    std::vector<DemoRecord> far{record("t", 0, 2.0), record("t", 1, 50.0)};
    CHECK(build_histogram(far, 2.0).counts[99] == 2);

    std::vector<DemoRecord> mixed{record("t", 0, 0.1), record("u", 1, 0.2)};
    CHECK_THROWS_AS(build_histogram(mixed, 2.0), ContractViolation);
    CHECK_THROWS_AS(build_histogram(std::vector<DemoRecord>{}, 2.0), ContractViolation);
}

TEST_CASE("build_histogram on uniform distances stays within a binomial bound") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unif(0.0, 2.0);
    std::vector<DemoRecord> recs;
    for (int i = 0; i < 10000; ++i) recs.push_back(record("u", i, unif(rng)));
    const auto h = build_histogram(recs, 2.0);
    CHECK(h.total() == 10000);
    const double sigma = std::sqrt(10000 * 0.01 * 0.99);
    for (auto c : h.counts) CHECK(std::abs(static_cast<double>(c) - 100.0) <= 5.0 * sigma);
}

TEST_CASE("cdf_from_histogram") {
    TrajectoryHistogram h;
    h.counts[0] = 7;
    for (double v : cdf_from_histogram(h).values) CHECK(v == 1.0);

    TrajectoryHistogram uniform;
    uniform.counts.fill(3);
    const auto cdf = cdf_from_histogram(uniform);
    for (std::size_t k = 0; k < kHistogramBins; ++k) CHECK(cdf.values[k] == doctest::Approx((k + 1) / 100.0));
    CHECK(cdf.bin_edges.size() == 101);
    CHECK(cdf.bin_edges.back() == uniform.d_max);

    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> counts(0, 9);
    for (int trial = 0; trial < 50; ++trial) {
        TrajectoryHistogram r;
        for (auto& c : r.counts) c = static_cast<std::uint64_t>(counts(rng));
        r.counts[50] += 1;
        const auto got = cdf_from_histogram(r);
        std::uint64_t total = 0;
        for (auto c : r.counts) total += c;
        for (std::size_t k = 0; k < kHistogramBins; ++k) {
            std::uint64_t below = 0;
            for (std::size_t i = 0; i <= k; ++i) below += r.counts[i];
            CHECK(got.values[k] == static_cast<double>(below) / static_cast<double>(total));
        }
        CHECK(got.values.back() == 1.0);
    }

    CHECK(cdf_from_histogram(TrajectoryHistogram{}).empty());
}

TEST_CASE("make_training_set sampling") {
    const auto one = make_training_set({trajectory_with_frames("one", 1)});
    CHECK(one.examples.size() == 1);

    const auto twenty = make_training_set({trajectory_with_frames("twenty", 20)}, {100, 3, 2.0});
    REQUIRE(twenty.examples.size() == 100);
    std::set<std::pair<double, double>> seen;
    for (const auto& ex : twenty.examples) seen.emplace(ex.feat_a(0), ex.feat_b(0));
    CHECK(seen.size() == 100);
    for (const auto& ex : twenty.examples) {
        CHECK(std::is_sorted(ex.target.begin(), ex.target.end()));
        CHECK(ex.target.back() == 1.0);
    }

    const auto again = make_training_set({trajectory_with_frames("twenty", 20)}, {100, 3, 2.0});
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(again.examples[i].feat_a == twenty.examples[i].feat_a);
        CHECK(again.examples[i].feat_b == twenty.examples[i].feat_b);
        CHECK(again.examples[i].target == twenty.examples[i].target);
    }
}

TEST_CASE("make_training_set bookkeeping and empty trajectories") {
    std::vector<Trajectory> trajs{trajectory_with_frames("a", 3), trajectory_with_frames("b", 12),
                                  trajectory_with_frames("c", 9), Trajectory{"empty", {}}};
    const auto set = make_training_set(trajs);
    CHECK(set.examples.size() == 9 + 100 + 81);
    REQUIRE(set.warnings.size() == 1);
    CHECK(set.warnings[0].find("empty") != std::string::npos);
}
