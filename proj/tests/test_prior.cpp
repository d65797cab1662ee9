#include "bayesrisk/prior.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "bayesrisk/assets.hpp"
#include "bayesrisk/errors.hpp"
#include "test_util.hpp"

using namespace bayesrisk;

namespace {

Feature vec(std::initializer_list<double> v) {
    Feature f(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) f(i++) = x;
    return f;
}

std::vector<Feature> gaussian_clusters(const std::vector<Feature>& means, double sigma, std::size_t per_cluster,
                                       std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    std::vector<Feature> out;
    for (std::size_t i = 0; i < per_cluster; ++i)
        for (const auto& m : means) {
            Feature f = m;
            for (auto& v : f) v += n(rng);
            out.push_back(f);
        }
    return out;
}

// Plain Lloyd from uniformly chosen distinct starting points, best of `restarts`.
double restart_oracle_sse(const std::vector<Feature>& x, std::size_t k, int restarts, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double best = INFINITY;
    for (int r = 0; r < restarts; ++r) {
        std::vector<std::size_t> idx(x.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<Feature> c;
        for (std::size_t j = 0; j < k; ++j) c.push_back(x[idx[j]]);
        double sse = 0.0;
        for (int it = 0; it < 300; ++it) {
            std::vector<Feature> sum(k, Feature::Zero(x[0].size()));
            std::vector<int> cnt(k, 0);
            sse = 0.0;
            for (const auto& p : x) {
                std::size_t bj = 0;
                for (std::size_t j = 1; j < k; ++j)
                    if ((p - c[j]).squaredNorm() < (p - c[bj]).squaredNorm()) bj = j;
                sse += (p - c[bj]).squaredNorm();
                sum[bj] += p;
                ++cnt[bj];
            }
            for (std::size_t j = 0; j < k; ++j)
                if (cnt[j] > 0) c[j] = sum[j] / cnt[j];
        }
        best = std::min(best, sse);
    }
    return best;
}

std::string brute_force_category(const ObjectLut& lut, const Feature& q, double* dist) {
    std::vector<std::pair<double, std::string>> all;
    for (const auto& [cat, cents] : lut.entries)
        for (const auto& c : cents) all.emplace_back((q - c).norm(), cat);
    std::sort(all.begin(), all.end());
    *dist = all.front().first;
    return all.front().second;
}

ObjectLut two_point_lut() {
    ObjectLut lut;
    lut.feature_dim = 2;
    lut.k = 1;
    lut.entries["mug"] = {vec({1.0, 0.0})};
    lut.entries["bowl"] = {vec({-1.0, 0.0})};
    return lut;
}

}  // namespace

TEST_CASE("kmeans fixed points") {
    std::mt19937_64 rng(1);
    std::vector<Feature> xs{vec({1, 2}), vec({3, 5}), vec({-4, 0.5}), vec({0.25, 7})};
    const auto one = kmeans(xs, 1, 50, rng);
    REQUIRE(one.size() == 1);
    CHECK(one[0](0) == doctest::Approx(0.0625));
    CHECK(one[0](1) == doctest::Approx(3.625));

    const std::vector<Feature> points{vec({0, 0}), vec({10, 0}), vec({0, 10}), vec({10, 10}), vec({5, 20})};
    std::vector<Feature> repeated;
    for (int r = 0; r < 4; ++r) repeated.insert(repeated.end(), points.begin(), points.end());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 g(seed);
        auto cents = kmeans(repeated, 5, 100, g);
        auto key = [](const Feature& f) { return std::make_pair(f(0), f(1)); };
        std::sort(cents.begin(), cents.end(), [&](const Feature& a, const Feature& b) { return key(a) < key(b); });
        auto expect = points;
        std::sort(expect.begin(), expect.end(), [&](const Feature& a, const Feature& b) { return key(a) < key(b); });
        for (std::size_t i = 0; i < 5; ++i) CHECK(cents[i] == expect[i]);
    }
    CHECK_THROWS_AS(kmeans(xs, 5, 10, rng), ContractViolation);
}

TEST_CASE("kmeans SSE is close to a multi-restart oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Feature> means;
        for (int c = 0; c < 5; ++c) {
            Feature m(8);
            for (auto& v : m) v = n(rng);
            means.push_back(m);
        }
        const auto x = gaussian_clusters(means, 0.3, 40, rng);
        std::mt19937_64 g(trial);
        const double ours = within_cluster_sse(x, kmeans(x, 5, 100, g));
        const double oracle = restart_oracle_sse(x, 5, 20, 100 + trial);
        INFO("trial " << trial << " ours " << ours << " oracle " << oracle);
        CHECK(ours <= 1.05 * oracle);
    }
}

TEST_CASE("build_object_lut") {
    std::mt19937_64 rng(5);
    std::map<std::string, std::vector<Feature>> samples;
    std::normal_distribution<double> n(0.0, 1.0);
    for (const char* cat : {"cup", "laptop", "plant"}) {
        for (int i = 0; i < 30; ++i) samples[cat].push_back(vec({n(rng), n(rng), n(rng)}));
    }
    const auto a = build_object_lut(samples, {5, 100, 10, 9});
    const auto b = build_object_lut(samples, {5, 100, 10, 9});
    CHECK(a.warnings.empty());
    CHECK(a.lut.feature_dim == 3);
    for (const auto& [cat, cents] : a.lut.entries) {
        CHECK(cents.size() == 5);
        CHECK(cents == b.lut.entries.at(cat));
    }

    samples["tiny"] = {vec({1, 1, 1}), vec({2, 2, 2})};
    const auto padded = build_object_lut(samples, {5, 100, 10, 9});
    REQUIRE(padded.warnings.size() == 1);
    CHECK(padded.warnings[0].find("tiny") != std::string::npos);
    for (const auto& c : padded.lut.entries.at("tiny")) CHECK((c == vec({1, 1, 1}) || c == vec({2, 2, 2})));

    samples["none"] = {};
    CHECK_THROWS_AS(build_object_lut(samples), DatasetError);
    samples.erase("none");
    samples["odd"] = {vec({1, 2})};
    CHECK_THROWS_AS(build_object_lut(samples), SchemaError);
}

TEST_CASE("match_category") {
    const auto lut = two_point_lut();
    const auto hit = match_category(lut, vec({1.0, 0.0}));
    CHECK(hit.category == "mug");
    CHECK(hit.distance == 0.0);
    const auto mid = match_category(lut, vec({0.0, 3.0}));
    CHECK(mid.category == "bowl");
    CHECK(mid.distance == doctest::Approx(std::sqrt(10.0)));
    CHECK_FALSE(match_category_within(lut, vec({0.0, 3.0}), 3.0).has_value());
    CHECK(match_category_within(lut, vec({0.0, 3.0}), 3.5)->category == "bowl");
    CHECK_THROWS_AS(match_category(ObjectLut{}, vec({0.0})), LookupError);
    CHECK_THROWS_AS(match_category(lut, vec({0.0, 0.0, 0.0})), SchemaError);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    std::map<std::string, std::vector<Feature>> samples;
    for (int c = 0; c < 6; ++c)
        for (int i = 0; i < 20; ++i) samples["cat" + std::to_string(c)].push_back(vec({n(rng), n(rng), n(rng), n(rng)}));
    const auto big = build_object_lut(samples).lut;
    for (int q = 0; q < 1000; ++q) {
        const Feature x = vec({2 * n(rng), 2 * n(rng), 2 * n(rng), 2 * n(rng)});
        double d = 0.0;
        const auto expected = brute_force_category(big, x, &d);
        const auto got = match_category(big, x);
        CHECK(got.category == expected);
        CHECK(got.distance == doctest::Approx(d).epsilon(1e-12));
    }
}

TEST_CASE("matching recovers well-separated categories") {
    std::mt19937_64 rng(11);
    const double sigma = 0.05;
    const std::vector<std::string> cats{"apple", "book", "candle", "drill", "egg"};
    std::map<std::string, std::vector<Feature>> means;
    // category c has 5 sub-cluster means spaced far apart (>= 6 sigma between any two)
    for (std::size_t c = 0; c < cats.size(); ++c)
        for (int s = 0; s < 5; ++s) means[cats[c]].push_back(vec({static_cast<double>(c), 0.5 * s, 0.0}));
    std::map<std::string, std::vector<Feature>> train;
    for (const auto& [cat, ms] : means) train[cat] = gaussian_clusters(ms, sigma, 30, rng);
    const auto lut = build_object_lut(train, {5, 100, 10, 2}).lut;
    int correct = 0, total = 0;
    for (const auto& [cat, ms] : means) {
        for (const auto& x : gaussian_clusters(ms, sigma, 20, rng)) {
            ++total;
            correct += match_category(lut, x).category == cat;
        }
    }
    CHECK(correct == total);
}

TEST_CASE("object LUT file round trip") {
    const TempDir dir;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> n(0.0, 1.0);
    std::map<std::string, std::vector<Feature>> samples;
    for (const char* cat : {"coffee maker", "cup", "laptop"})
        for (int i = 0; i < 12; ++i) samples[cat].push_back(vec({n(rng), n(rng)}));
    const auto lut = build_object_lut(samples).lut;
    save_object_lut(lut, dir.path / "objects.lut");
    const auto back = load_object_lut(dir.path / "objects.lut");
    CHECK(back.k == lut.k);
    CHECK(back.feature_dim == lut.feature_dim);
    CHECK(back.entries == lut.entries);

    const auto size = std::filesystem::file_size(dir.path / "objects.lut");
    std::filesystem::resize_file(dir.path / "objects.lut", size - 3);
    CHECK_THROWS_AS(load_object_lut(dir.path / "objects.lut"), ParseError);
    CHECK_THROWS_AS(load_object_lut(dir.path / "absent.lut"), IoError);
}

TEST_CASE("risk lookup") {
    RiskLut lut;
    lut.insert("cup", "laptop", 1, "spillage");
    CHECK(lut.lookup("cup", "laptop") == lut.lookup("laptop", "cup"));
    CHECK(lut.lookup("laptop", "cup").rating == 1);

    lut.insert("table", "knife", 1, "crushing");
    CHECK(lut.lookup("knife", "table").rating == 5);
    CHECK(lut.lookup("table", "anything").rating == 5);

    try {
        lut.lookup("cup", "plant");
        FAIL("expected LookupError");
    } catch (const LookupError& e) {
        CHECK(std::string(e.what()).find("cup") != std::string::npos);
        CHECK(std::string(e.what()).find("plant") != std::string::npos);
    }
    lut.set_default_rating(3);
    CHECK(lut.lookup("cup", "plant") == RiskEntry{3, "unrated"});
    CHECK_THROWS_AS(lut.set_default_rating(6), ConfigError);
    CHECK_THROWS_AS(lut.insert("a", "b", 0, "x"), DomainError);
}

TEST_CASE("rating_to_prob") {
    CHECK(rating_to_prob(1).value() == 0.0);
    CHECK(rating_to_prob(5).value() == 1.0);
    CHECK(rating_to_prob(3).value() == 0.5);
    for (int r = 1; r < 5; ++r) CHECK(rating_to_prob(r).value() < rating_to_prob(r + 1).value());
    CHECK_THROWS_AS(rating_to_prob(0), DomainError);
    CHECK_THROWS_AS(rating_to_prob(6), DomainError);
}

TEST_CASE("ingest_risk_table") {
    std::istringstream empty("");
    CHECK(parse_risk_table(empty).lut.size() == 0);

    std::istringstream dup("# comment\ncup|laptop|4|none\n\nlaptop|cup|2|spillage\n");
    const auto merged = parse_risk_table(dup);
    CHECK(merged.lut.lookup("cup", "laptop") == RiskEntry{2, "spillage"});
    CHECK(merged.warnings.size() == 1);

    std::ostringstream full;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            if (i != j) full << "obj" << i << "|obj" << j << "|" << 1 + (i + j) % 5 << "|none\n";
    std::istringstream full_in(full.str());
    const auto table = parse_risk_table(full_in);
    CHECK(table.lut.size() == 45);
    CHECK(table.warnings.empty());

    std::istringstream bad("cup|laptop|2|none\ncup|plant|seven|none\n");
    try {
        parse_risk_table(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream short_row("cup|laptop|2\n");
    CHECK_THROWS_AS(parse_risk_table(short_row), ParseError);
    CHECK_THROWS_AS(ingest_risk_table("/nonexistent/table.txt"), IoError);

    std::ostringstream out;
    write_risk_table(out, table.lut);
    std::istringstream again(out.str());
    CHECK(parse_risk_table(again).lut.entries() == table.lut.entries());
}

TEST_CASE("response parsing and prompt rendering") {
    const auto p = parse_rating_line("cup|laptop|1|electrocution");
    REQUIRE(p.has_value());
    CHECK(p->rating == 1);
    CHECK(p->reason == "electrocution");
    CHECK(p->pair == CategoryPair{"cup", "laptop"});
    CHECK_FALSE(parse_rating_line("cup|laptop|electrocution").has_value());
    CHECK_FALSE(parse_rating_line("cup|laptop|9|fire hazard").has_value());
    CHECK(parse_rating_line("  cup | laptop | 2 | fire hazard ")->reason == "fire hazard");

    const std::string tmpl(bundled_prompt_template());
    CHECK(tmpl.find("{{pairs}}") != std::string::npos);
    const auto prompt = render_prompt(tmpl, {{"cup", "laptop"}, {"knife", "sofa"}});
    CHECK(prompt.find("cup|laptop\nknife|sofa\n") != std::string::npos);
    for (const auto& h : hazard_types()) CHECK(prompt.find(h) != std::string::npos);
    CHECK(prompt.find("{{") == std::string::npos);

    const auto cats = bundled_categories();
    CHECK(cats.size() == 338);
    CHECK(std::set<std::string>(cats.begin(), cats.end()).size() == 338);
}

TEST_CASE("generate_risk_table with recorded responses") {
    const TempDir dir;
    {
        nlohmann::json fixture{{"responses",
                                {"cup|laptop|1|electrocution\ncup|plant|4|spillage\n",
                                 "laptop|plant|2|spillage\n"}}};
        std::ofstream(dir.path / "replay.json") << fixture.dump();
    }
    GenerationOptions opts;
    opts.batch_size = 2;
    auto client = ReplayClient::from_file(dir.path / "replay.json");
    const auto gen = generate_risk_table(client, {"cup", "laptop", "plant"}, std::string(bundled_prompt_template()), opts);
    CHECK(gen.skipped.empty());
    CHECK(gen.transcript.size() == 2);

    std::istringstream expected_table("cup|laptop|1|electrocution\ncup|plant|4|spillage\nlaptop|plant|2|spillage\n");
    CHECK(gen.lut.entries() == parse_risk_table(expected_table).lut.entries());

    auto again = ReplayClient::from_file(dir.path / "replay.json");
    CHECK(generate_risk_table(again, {"cup", "laptop", "plant"}, "{{pairs}}", opts).lut.entries() == gen.lut.entries());
}

TEST_CASE("generate_risk_table retries and then skips malformed pairs") {
    std::vector<std::string> responses{"cup|laptop|electrocution\nlaptop|cup|", "cup|laptop|x|y", "", "cup|laptop"};
    ReplayClient client(responses);
    const auto gen = generate_risk_table(client, {"cup", "laptop"}, "{{pairs}}");
    CHECK(gen.lut.size() == 0);
    CHECK(gen.transcript.size() == 4);
    REQUIRE(gen.skipped.size() == 1);
    CHECK(gen.skipped[0].pair == CategoryPair{"cup", "laptop"});

    // a retry that succeeds only asks for the missing pair
    GenerationOptions opts;
    opts.batch_size = 3;
    ReplayClient two({"cup|laptop|3|none\ncup|plant|oops|none\n", "cup|plant|5|none\n", "", ""});
    const auto retried = generate_risk_table(two, {"cup", "laptop", "plant"}, "{{pairs}}", opts);
    REQUIRE(retried.transcript.size() == 4);
    CHECK(retried.transcript[1].prompt == "cup|plant\nlaptop|plant\n");
    CHECK(retried.skipped.size() == 1);
    CHECK(retried.lut.lookup("cup", "plant").rating == 5);

    ReplayClient exhausted({});
    CHECK_THROWS_AS(generate_risk_table(exhausted, {"a", "b"}, "{{pairs}}"), TransportError);
}

TEST_CASE("HTTP completion client") {
    httplib::Server server;
    std::string seen_auth, seen_model;
    server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        seen_model = body.value("model", "");
        res.set_content(nlohmann::json{{"choices", {{{"text", "echo:" + body["prompt"].get<std::string>()}}}}}.dump(),
                        "application/json");
    });
    server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("BAYESRISK_TEST_TOKEN", "secret", 1);
    EndpointConfig cfg;
    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
    cfg.token_env = "BAYESRISK_TEST_TOKEN";
    cfg.model = "tiny";
    cfg.timeout_seconds = 5;
    auto client = make_http_client(cfg);
    CHECK(client->complete("hi") == "echo:hi");
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_model == "tiny");

    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/fail";
    CHECK_THROWS_AS(make_http_client(cfg)->complete("hi"), TransportError);
    server.stop();
    worker.join();

    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
    CHECK_THROWS_AS(make_http_client(cfg)->complete("hi"), TransportError);
    cfg.url = "ftp://example";
    CHECK_THROWS_AS(make_http_client(cfg), ConfigError);
}
