#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bayesrisk/errors.hpp"
#include "bayesrisk/synth.hpp"
#include "test_util.hpp"

using namespace bayesrisk;

namespace {

std::string world_text(const SynthWorld& w) {
    std::ostringstream out;
    write_world(out, w);
    return out.str();
}

std::string log_text(const DemoLog& log) {
    std::ostringstream out;
    write_demo_log(out, log);
    return out.str();
}

// Fraction of samples <= d.
double ecdf(const std::vector<double>& sorted, double d) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), d) - sorted.begin()) /
           static_cast<double>(sorted.size());
}

}  // namespace

TEST_CASE("gen_world") {
    CHECK(world_text(gen_world(6, 8, 3)) == world_text(gen_world(6, 8, 3)));
    CHECK(world_text(gen_world(6, 8, 3)) != world_text(gen_world(6, 8, 4)));

    const auto two = gen_world(2, 4, 1);
    CHECK(two.ratings.size() == 1);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto w = gen_world(8, 1 + seed % 5, seed);
        CHECK(w.categories.size() == 8);
        // pairwise audit, independent of min_separation()
        for (std::size_t i = 0; i < w.categories.size(); ++i) {
            CHECK(w.categories[i].name != "table");
            for (std::size_t j = i + 1; j < w.categories.size(); ++j) {
                CHECK((w.categories[i].mean - w.categories[j].mean).norm() >= 6.0 * w.max_stddev());
                const int r = w.rating(w.categories[i].name, w.categories[j].name);
                CHECK(r >= 1);
                CHECK(r <= 5);
                CHECK(r == w.rating(w.categories[j].name, w.categories[i].name));
            }
        }
        CHECK(w.ratings.size() == 28);
    }
    CHECK_THROWS_AS(gen_world(1, 4, 0), ConfigError);
}

TEST_CASE("demo distances follow the rating") {
    const auto five = sample_demo_distances(5, 10000, 7);
    double mean = 0.0;
    for (double d : five) mean += d;
    mean /= 10000.0;
    CHECK(std::abs(mean - 0.15) <= 0.01);
    CHECK(*std::min_element(five.begin(), five.end()) >= 0.0);

    std::map<int, std::vector<double>> by_rating;
    for (int r = 1; r <= 5; ++r) {
        by_rating[r] = sample_demo_distances(r, 10000, 100 + r);
        std::sort(by_rating[r].begin(), by_rating[r].end());
    }
    // riskier pairs keep larger distances: CDF pointwise below
    for (int lo = 1; lo <= 5; ++lo)
        for (int hi = lo + 1; hi <= 5; ++hi)
            for (int i = 0; i < 100; ++i) {
                const double d = 2.0 * i / 99.0;
                CHECK(ecdf(by_rating[lo], d) <= ecdf(by_rating[hi], d) + 0.02);
            }
    CHECK(demo_distance_mean(1) == doctest::Approx(1.15));
    CHECK_THROWS_AS(demo_distance_mean(0), DomainError);
}

TEST_CASE("gen_demos") {
    const auto w = gen_world(4, 6, 11);
    const auto log = gen_demos(w, 3, 20, 5);
    CHECK(log.dim == 6);
    CHECK(log.records.size() == w.ratings.size() * 3 * 20);
    CHECK(log_text(log) == log_text(gen_demos(w, 3, 20, 5)));
    CHECK(log_text(log) != log_text(gen_demos(w, 3, 20, 6)));

    // round trips through the demo log parser
    std::istringstream in(log_text(log));
    const auto back = parse_demo_log(in);
    CHECK(back.records.size() == log.records.size());
    CHECK(group_trajectories(back.records).size() == w.ratings.size() * 3);

    // per-pair mean distance tracks the rating
    const auto big = gen_demos(gen_world(2, 3, 2), 10, 1000, 9);
    const auto w2 = gen_world(2, 3, 2);
    double mean = 0.0;
    for (const auto& r : big.records) mean += r.distance;
    mean /= static_cast<double>(big.records.size());
    CHECK(std::abs(mean - demo_distance_mean(w2.ratings.entries().begin()->second.rating)) <= 0.01);
}

TEST_CASE("gen_scene") {
    const auto w = gen_world(6, 8, 21);
    const auto& names = w.categories;

    const auto full = gen_scene(w, full_frame_layout(names[0].name, names[1].name, 6, 7, 0.8), 6, 7, 1);
    CHECK(full.region_ratings == std::vector<int>{w.rating(names[0].name, names[1].name)});
    for (std::size_t i = 0; i < 42; ++i) {
        CHECK(full.masks.labels[i] == 1);
        CHECK(full.distances.data[i] == 0.8);
    }

    const auto layout = shelf_layout(w, names[0].name, 20, 12);
    REQUIRE(layout.regions.size() == 5);
    const auto shelf = gen_scene(w, layout, 20, 12, 2);
    REQUIRE(shelf.region_ratings.size() == 5);
    std::map<int, std::size_t> count;
    for (auto l : shelf.masks.labels) ++count[l];
    for (int l = 1; l <= 5; ++l) {
        CHECK(count[l] == 4 * 12);
        CHECK(shelf.region_ratings[l - 1] == w.rating(names[0].name, names[l].name));
    }
    CHECK(shelf.distances.at(0, 0) == doctest::Approx(0.1));
    CHECK(shelf.distances.at(19, 11) == doctest::Approx(1.6));

    TempDir dir;
    const auto again = gen_scene(w, layout, 20, 12, 2);
    write_feature_image(shelf.features, dir.path / "a.fimg");
    write_feature_image(again.features, dir.path / "b.fimg");
    write_distance_image(shelf.distances, dir.path / "a.dimg");
    write_distance_image(again.distances, dir.path / "b.dimg");
    CHECK(read_bytes(dir.path / "a.fimg") == read_bytes(dir.path / "b.fimg"));
    CHECK(read_bytes(dir.path / "a.dimg") == read_bytes(dir.path / "b.dimg"));

    SceneLayout overlap{names[0].name, {{0, 0, 4, 4, names[1].name, 1, 1}, {3, 3, 2, 2, names[2].name, 1, 1}}};
    CHECK_THROWS_AS(gen_scene(w, overlap, 10, 10, 0), ConfigError);
    SceneLayout outside{names[0].name, {{8, 8, 4, 4, names[1].name, 1, 1}}};
    CHECK_THROWS_AS(gen_scene(w, outside, 10, 10, 0), ConfigError);
    SceneLayout unknown{names[0].name, {{0, 0, 1, 1, "no such thing", 1, 1}}};
    CHECK_THROWS_AS(gen_scene(w, unknown, 10, 10, 0), LookupError);
    CHECK_THROWS_AS(shelf_layout(gen_world(5, 4, 1), gen_world(5, 4, 1).categories[0].name, 10, 10), ConfigError);
}

TEST_CASE("scene features classify back to their category") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto w = gen_world(6, 32, seed);
        const auto lut = build_object_lut(gen_category_samples(w, 200, seed + 1), {}).lut;
        const auto layout = shelf_layout(w, w.categories[0].name, 10, 10);
        const auto scene = gen_scene(w, layout, 10, 10, seed + 2);
        for (std::size_t r = 0; r < 10; ++r)
            for (std::size_t c = 0; c < 10; ++c) {
                const auto label = scene.masks.labels[r * 10 + c];
                CHECK(match_category(lut, scene.features.pixel(r, c)).category == layout.regions[label - 1].category);
            }
    }
}

TEST_CASE("synth files round trip") {
    const auto w = gen_world(5, 3, 8);
    std::istringstream in(world_text(w));
    CHECK(world_text(parse_world(in)) == world_text(w));

    std::istringstream bad("BRWORLD 1\ndim 3\nseed 1\ncategories 1\nmug|0.05|1 2\n");
    try {
        parse_world(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
    }

    const auto layout = shelf_layout(gen_world(6, 3, 8), gen_world(6, 3, 8).categories[2].name, 25, 9);
    std::stringstream lf;
    write_layout(lf, layout);
    const auto back = parse_layout(lf);
    REQUIRE(back.regions.size() == 5);
    CHECK(back.manipulated == layout.manipulated);
    CHECK(back.regions[4].category == layout.regions[4].category);
    CHECK(back.regions[4].row == 20);
    CHECK(back.regions[4].d_far == 1.6);

    TempDir dir;
    const auto samples = gen_category_samples(w, 4, 1);
    write_category_samples(samples, dir.path / "samples");
    const auto read = read_category_samples(dir.path / "samples");
    CHECK(read == samples);
    CHECK_THROWS_AS(read_category_samples(dir.path / "missing"), IoError);
}
