// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <unistd.h>

#include "bayesrisk/bezier.hpp"
#include "bayesrisk/cli.hpp"
#include "bayesrisk/core.hpp"
#include "bayesrisk/errors.hpp"
#include "bayesrisk/likelihood.hpp"
#include "bayesrisk/planner.hpp"
#include "bayesrisk/prior.hpp"
#include "bayesrisk/riskfield.hpp"
#include "bayesrisk/synth.hpp"
#include "bayesrisk/valuation.hpp"

using namespace bayesrisk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double bernstein(const ControlPoints& cp, double t) {
    const int n = static_cast<int>(cp.size()) - 1;
    double s = 0.0;
    for (int k = 0; k <= n; ++k)
        s += std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0)) * std::pow(t, k) *
             std::pow(1.0 - t, n - k) * cp[k];
    return s;
}

ControlPoints random_monotone(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ControlPoints cp;
    for (double& c : cp) c = u(rng);
    std::sort(cp.begin(), cp.end());
    return cp;
}

// ---- 1 ----
Outcome closed_form() {
    const double got = attenuate_prior(SafeProbability(0.0), 2.0, {0.5}).value();
    const double want = 1.0 - std::exp(-1.0);
    bool ends = true;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double p = u(rng), d = 5.0 * u(rng);
        ends = ends && attenuate_prior(SafeProbability(p), 0.0).value() == p;
        ends = ends && attenuate_prior(SafeProbability(1.0), d).value() == 1.0;
    }
    return {std::abs(got - want) <= 1e-9 && ends,
            fmt::format("h'(0, 2 m) = {:.12f}, 1-e^-1 = {:.12f}, endpoint identities {}", got, want,
                        ends ? "exact" : "violated")};
}

// ---- 2 ----
Outcome ranking_consistency() {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int ok = 0;
    const int n = 1000;
    for (int trial = 0; trial < n; ++trial) {
        // context 2 dominates context 1 in both factors
        ControlPoints lo = random_monotone(rng), hi;
        for (std::size_t k = 0; k < lo.size(); ++k) hi[k] = lo[k] + (1.0 - lo[k]) * u(rng) * 0.5;
        std::sort(hi.begin(), hi.end());
        for (std::size_t k = 0; k < lo.size(); ++k) hi[k] = std::max(hi[k], lo[k]);
        const double p1 = u(rng), p2 = p1 + (1.0 - p1) * u(rng);
        const PosteriorCurve c1({}, BezierCurve(lo), SafeProbability(p1)), c2({}, BezierCurve(hi), SafeProbability(p2));
        bool good = true;
        for (int g = 0; g < 50; ++g) {
            const double d = 2.0 * u(rng);
            const double v1 = c1.viability_exact(d), v2 = c2.viability_exact(d);
            good = good && v1 <= v2 && risk_at(c1, d).value() >= risk_at(c2, d).value();
        }
        ok += good;
    }
    return {ok == n, fmt::format("{}/{} dominated context pairs ordered (viability and risk, 50 distances each)", ok, n)};
}

// ---- 3 ----
Outcome bezier_suite() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(3);
    long violations = 0;
    for (int c = 0; c < 1000; ++c) {
        const BezierCurve curve(random_monotone(rng));
        double prev = curve.evaluate(0.0);
        for (int g = 1; g < 1000; ++g) {
            const double cur = curve.evaluate(g / 999.0);
            violations += cur < prev;
            prev = cur;
        }
    }
    double worst_rmse = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        ControlPoints truth = random_monotone(rng);
        truth.back() = 1.0;
        EmpiricalCdf cdf;
        for (std::size_t k = 0; k <= kHistogramBins; ++k) cdf.bin_edges.push_back(2.0 * k / kHistogramBins);
        for (std::size_t k = 0; k < kHistogramBins; ++k) cdf.values.push_back(bernstein(truth, (k + 1.0) / kHistogramBins));
        cdf.values.back() = 1.0;
        const auto fit = fit_to_cdf(cdf, 2.0);
        double se = 0.0;
        for (std::size_t k = 0; k < kHistogramBins; ++k) {
            const double e = bernstein(fit.curve.control_points(), (k + 1.0) / kHistogramBins) - cdf.values[k];
            se += e * e;
        }
        worst_rmse = std::max(worst_rmse, std::sqrt(se / kHistogramBins));
    }
    double worst_inv = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const BezierCurve curve(random_monotone(rng));
        const double lo = curve.evaluate(0.0), hi = curve.evaluate(1.0);
        const double y = lo + u(rng) * (hi - lo);
        worst_inv = std::max(worst_inv, std::abs(curve.evaluate(curve.inverse(y, 1e-12)) - y));
    }
    const double secs = seconds_since(t0);
    return {violations == 0 && worst_rmse <= 1e-3 && worst_inv <= 1e-6 && secs < 10.0,
            fmt::format("{} monotonicity violations over 10^6 evaluations, worst fit RMSE {:.2e}, worst inverse error "
                        "{:.2e}, {:.1f} s",
                        violations, worst_rmse, worst_inv, secs)};
}

// ---- 4 ----
Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t seed : {101u, 102u, 103u}) {
        auto model = LikelihoodModel::init(6, 16, 2, seed);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        TrainingExample ex{Feature(6), Feature(6), {}};
        for (auto& v : ex.feat_a) v = g(rng);
        for (auto& v : ex.feat_b) v = g(rng);
        for (double& t : ex.target) t = u(rng);
        std::sort(ex.target.begin(), ex.target.end());
        std::vector<double> analytic;
        backward(model, ex).grad.for_each([&](const auto& t) { analytic.insert(analytic.end(), t.data(), t.data() + t.size()); });
        std::vector<double*> ptrs;
        model.params().for_each([&](auto& t) {
            for (Eigen::Index j = 0; j < t.size(); ++j) ptrs.push_back(t.data() + j);
        });
        const double eps = 1e-5;
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
            const double saved = *ptrs[i];
            *ptrs[i] = saved + eps;
            const double up = mse_loss(model.forward(ex.feat_a, ex.feat_b), ex.target);
            *ptrs[i] = saved - eps;
            const double down = mse_loss(model.forward(ex.feat_a, ex.feat_b), ex.target);
            *ptrs[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
        }
    }
    const auto model = LikelihoodModel::init(32, 64, 2, 7);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    int symmetric = 0;
    for (int i = 0; i < 1000; ++i) {
        Feature a(32), b(32);
        for (auto& v : a) v = g(rng);
        for (auto& v : b) v = g(rng);
        symmetric += model.forward(a, b) == model.forward(b, a);
    }
    return {worst <= 1e-4 && symmetric == 1000,
            fmt::format("max gradient error {:.2e} over 3 seeds (|a-n| / max(1, |a|)), {}/1000 pairs bitwise symmetric",
                        worst, symmetric)};
}

// Predicted CDF of a riskier pair stays below a safer pair's CDF.
double order_fraction(const BezierCurve& risky, const BezierCurve& safe, double tol) {
    int good = 0;
    for (int i = 0; i < 100; ++i) {
        const double d = risky.d_max() * i / 99.0;
        good += risky.evaluate_at_distance(d) <= safe.evaluate_at_distance(d) + tol;
    }
    return good / 100.0;
}

struct SmallPipeline {
    std::size_t categories, dim, traj_per_pair, frames, width, epochs, pairs_per_traj;
    double lr;
};

struct Trained {
    SynthWorld world;
    LikelihoodModel model;
    std::vector<double> history;
    std::size_t trajectories = 0;
};

Trained train_synth(const SmallPipeline& cfg, std::uint64_t seed) {
    Trained t;
    t.world = gen_world(cfg.categories, cfg.dim, seed);
    const auto log = gen_demos(t.world, cfg.traj_per_pair, cfg.frames, seed + 1);
    const auto trajs = group_trajectories(log.records);
    t.trajectories = trajs.size();
    TrainingSetOptions opts;
    opts.pairs_per_traj = cfg.pairs_per_traj;
    opts.seed = seed + 2;
    const auto set = make_training_set(trajs, opts);
    t.model = LikelihoodModel::init(cfg.dim, cfg.width, 2, seed + 3);
    TrainingConfig tc;
    tc.learning_rate = cfg.lr;
    tc.epochs = cfg.epochs;
    tc.seed = seed + 4;
    t.history = train(t.model, set.examples, tc);
    return t;
}

// ---- 5 ----
Outcome learning() {
    const auto t0 = Clock::now();
    const auto t = train_synth({5, 32, 5, 100, 64, 20, 100, 0.01}, 500);
    const double ratio = t.history.back() / t.history.front();
    std::vector<std::pair<int, BezierCurve>> curves;
    for (const auto& [pair, entry] : t.world.ratings.entries())
        curves.push_back({entry.rating, t.model.predict_curve(t.world.category(pair.first).mean,
                                                              t.world.category(pair.second).mean)});
    int ok = 0, total = 0;
    for (const auto& [ra, ca] : curves)
        for (const auto& [rb, cb] : curves)
            if (ra < rb) {
                ++total;
                ok += order_fraction(ca, cb, 0.02) >= 0.9;
            }
    const double frac = total ? static_cast<double>(ok) / total : 1.0;
    const double secs = seconds_since(t0);
    return {ratio <= 0.1 && frac >= 0.9 && secs < 300.0,
            fmt::format("{} trajectories, loss {:.4f} -> {:.5f} (x{:.3f}); stochastic order held for {}/{} rated-pair "
                        "comparisons; {:.0f} s",
                        t.trajectories, t.history.front(), t.history.back(), ratio, ok, total, secs)};
}

// ---- 6 ----
Outcome prior_suite() {
    int correct = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto w = gen_world(10, 32, 600 + seed);
        const auto lut = build_object_lut(gen_category_samples(w, 100, seed), {}).lut;
        for (const auto& [name, feats] : gen_category_samples(w, 100, 1000 + seed))
            for (const auto& f : feats) {
                ++total;
                correct += match_category(lut, f).category == name;
            }
    }
    const auto w = gen_world(12, 4, 9);
    bool symmetric = true;
    for (const auto& a : w.categories)
        for (const auto& b : w.categories)
            if (a.name != b.name) symmetric = symmetric && w.ratings.lookup(a.name, b.name) == w.ratings.lookup(b.name, a.name);
    std::istringstream table("table|knife|1|cutting\nmug|table|2|spillage\nmug|laptop|1|spillage\n");
    auto lut = parse_risk_table(table).lut;
    const bool tabletop = lut.lookup("knife", "table").rating == 5 && lut.lookup("table", "mug").rating == 5 &&
                          lut.lookup("table", "laptop").rating == 5 && lut.lookup("laptop", "mug").rating == 1;
    return {correct == total && symmetric && tabletop,
            fmt::format("held-out accuracy {}/{}, risk LUT symmetric: {}, tabletop pairs rated 5: {}", correct, total,
                        symmetric ? "yes" : "no", tabletop ? "yes" : "no")};
}

// ---- 7 ----
struct SeedResult {
    bool usable = false, concordant = false;
    std::string summary;
};

SeedResult shelf_seed(std::uint64_t seed) {
    const auto t = train_synth({6, 16, 3, 100, 32, 12, 40, 0.03}, 700 + seed);
    const auto lut = build_object_lut(gen_category_samples(t.world, 60, seed), {}).lut;
    const std::string manip = t.world.categories.front().name;
    const auto layout = shelf_layout(t.world, manip, 40, 30);
    const auto scene = gen_scene(t.world, layout, 40, 30, seed + 5);
    const auto risk = risk_image(t.model, lut, t.world.ratings, manip, scene.manip_feat, scene.features, scene.distances);
    std::vector<double> sum(layout.regions.size(), 0.0);
    std::vector<int> count(layout.regions.size(), 0);
    for (std::size_t i = 0; i < risk.data.size(); ++i)
        if (scene.masks.labels[i] && risk.valid(i)) sum[scene.masks.labels[i] - 1] += risk.data[i], ++count[scene.masks.labels[i] - 1];
    SeedResult r;
    r.concordant = true;
    for (std::size_t a = 0; a < sum.size(); ++a)
        for (std::size_t b = 0; b < sum.size(); ++b) {
            const int ra = scene.region_ratings[a], rb = scene.region_ratings[b];
            if (ra >= rb) continue;  // ties excluded
            r.usable = true;
            r.concordant = r.concordant && sum[a] / count[a] > sum[b] / count[b];
        }
    for (std::size_t a = 0; a < sum.size(); ++a) r.summary += fmt::format(" {}:{:.3f}", scene.region_ratings[a], sum[a] / count[a]);
    return r;
}

Outcome end_to_end_ranking() {
    const auto t0 = Clock::now();
    constexpr std::size_t kSeeds = 20;
    std::vector<SeedResult> results(kSeeds);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), kSeeds));
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t s; (s = next++) < kSeeds;) results[s] = shelf_seed(s);
        });
    for (auto& th : pool) th.join();
    int usable = 0, good = 0;
    std::string failed;
    for (std::size_t s = 0; s < kSeeds; ++s) {
        usable += results[s].usable;
        good += results[s].usable && results[s].concordant;
        if (results[s].usable && !results[s].concordant) failed += fmt::format(" [seed {}:{}]", s, results[s].summary);
    }
    const double secs = seconds_since(t0);
    const bool pass = usable > 0 && good >= 0.9 * usable && secs < 120.0;
    return {pass, fmt::format("rho = 1 on {}/{} seeds with distinct ratings ({} workers, {:.0f} s){}", good, usable,
                              workers, secs, failed.empty() ? "" : "; misordered (rating:mean risk):" + failed)};
}

// ---- 8 ----
Outcome appendix_fixture() {
    const auto shelf = rank_trajectories(
        {{"1", 0.4818, 20}, {"2", 0.5708, 20}, {"3", 0.4498, 20}, {"4", 0.6245, 20}, {"5", 0.5253, 20}});
    const auto kitchen = rank_trajectories(
        {{"1", 0.5888, 20}, {"2", 0.2618, 20}, {"3", 0.5994, 20}, {"4", 0.5180, 20}, {"5", 0.4841, 20}});
    const bool pass = shelf.least_risky == "3" && shelf.most_risky == "4" && kitchen.least_risky == "2" &&
                      kitchen.most_risky == "3";
    return {pass, fmt::format("shelf least {} most {}, kitchen least {} most {}", shelf.least_risky, shelf.most_risky,
                              kitchen.least_risky, kitchen.most_risky)};
}

// ---- 9 ----
double sampled_clearance(const Path& path, const std::vector<BallObstacle>& balls, double step) {
    double best = INFINITY;
    for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
        const Point3 a = path.waypoints[i - 1], b = path.waypoints[i];
        const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
        for (int s = 0; s <= n; ++s) {
            const Point3 p = a + (b - a) * (static_cast<double>(s) / n);
            for (const auto& ball : balls) best = std::min(best, (p - ball.center).norm() - ball.radius);
        }
    }
    return best;
}

Outcome planner_suite() {
    PlannerConfig cfg;
    cfg.resolution = 0.04;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.9, 0.9), rad(0.05, 0.25);
    double worst_free = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Point3 s(u(rng), u(rng), u(rng)), g(u(rng), u(rng), u(rng));
        worst_free = std::max(worst_free, plan(s, g, {}, cfg).length() / (g - s).norm());
    }
    double worst_clear = INFINITY;
    int planned = 0;
    for (int i = 0; i < 30; ++i) {
        std::vector<BallObstacle> balls;
        for (int k = 0; k < 15; ++k) balls.push_back({Point3(u(rng), u(rng), u(rng)) * 0.7, rad(rng), {}});
        try {
            const auto p = plan(Point3(-0.95, u(rng), u(rng)), Point3(0.95, u(rng), u(rng)), balls, cfg);
            ++planned;
            worst_clear = std::min(worst_clear, sampled_clearance(p, balls, cfg.resolution / 2));
        } catch (const InfeasibleInput&) {
        } catch (const NoPathError&) {
        }
    }
    const Point3 s(-0.8, 0, 0), g(0.8, 0, 0);
    const double r = 0.3, L = 1.6;
    const auto detour = plan(s, g, {{Point3::Zero(), r, {}}}, cfg);
    const double bound = 2.0 * std::sqrt(L * L / 4.0 + r * r);
    PosteriorCurve closed({}, BezierCurve([] {
                              ControlPoints cp;
                              cp.fill(1.0);
                              return cp;
                          }()),
                          SafeProbability(0.0));
    const double radius = extract_radius(closed, 0.1);
    const double radius_err = std::abs(radius - (-2.0 * std::log(0.9)));
    const bool pass = worst_free <= 1.01 && planned > 0 && worst_clear >= -cfg.resolution / 2 &&
                      detour.length() >= bound && radius_err <= 1e-4;
    return {pass, fmt::format("free-space length ratio <= {:.4f}; min sampled clearance {:.4f} over {} cluttered plans; "
                              "detour {:.4f} >= bound {:.4f}; radius error {:.1e}",
                              worst_free, worst_clear, planned, detour.length(), bound, radius_err)};
}

// ---- 10 ----
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) {
            std::ifstream in(e.path(), std::ios::binary);
            out[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(in), {});
        }
    return out;
}

// Runs the whole CLI surface inside `dir`; returns stdout of commands whose
// output goes to the terminal only, or an error description.
std::string run_cli_suite(const fs::path& dir, std::string& error) {
    const auto p = [&](const std::string& n) { return (dir / n).string(); };
    std::string captured;
    fs::create_directories(dir);
    const auto run = [&](std::vector<std::string> args, bool keep_stdout = false) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        if (code != 0 && error.empty()) error = fmt::format("'{}' exited {}: {}", args[args.size() > 2 ? 2 : 0], code, err.str());
        if (keep_stdout) captured += out.str();
    };
    std::ofstream(p("run.ini")) << "seed = 5\nlambda = 0.5\nalpha = 0.1\nfx = 40\nfy = 40\ncx = 15\ncy = 20\n";
    const std::vector<std::string> c{"--config", p("run.ini")};
    const auto with = [&](std::vector<std::string> rest) {
        std::vector<std::string> a = c;
        a.insert(a.end(), rest.begin(), rest.end());
        return a;
    };
    run(with({"synth", "world", "--categories", "6", "--dim", "8", "--out", p("world.txt"), "--samples-dir",
              p("samples"), "--samples-per-category", "50", "--risk-table", p("ratings.txt")}));
    if (!error.empty()) return captured;
    const auto world = load_world(p("world.txt"));
    const std::string manip = world.categories.front().name;
    run(with({"synth", "demos", "--world", p("world.txt"), "--traj-per-pair", "1", "--frames", "40", "--out",
              p("demos.log")}));
    run(with({"synth", "scene", "--world", p("world.txt"), "--height", "20", "--width", "15", "--out-prefix",
              p("scene/shelf")}));
    run(with({"build-object-lut", "--samples", p("samples"), "--out", p("obj.lut")}));
    run(with({"build-risk-lut", "--table", p("ratings.txt"), "--out", p("risk.txt")}));
    {
        std::string lines;
        for (const auto& [pair, entry] : world.ratings.entries())
            lines += fmt::format("{}|{}|{}|spillage\\n", pair.first, pair.second, entry.rating);
        std::ofstream(p("replay.json")) << "{\"responses\": [\"" << lines << "\"]}\n";
        run(with({"build-risk-lut", "--replay", p("replay.json"), "--world", p("world.txt"), "--out",
                  p("risk_replay.txt"), "--transcript", p("transcript.json")}));
    }
    run(with({"train", "--demos", p("demos.log"), "--out", p("model.brlm"), "--width", "16", "--epochs", "3",
              "--pairs-per-traj", "20"}));
    const std::vector<std::string> post{"--model", p("model.brlm"), "--object-lut", p("obj.lut"), "--risk-lut",
                                        p("risk.txt"), "--manip", manip, "--manip-feature", p("scene/shelf_manip.txt")};
    const auto with_post = [&](std::vector<std::string> head, std::vector<std::string> tail) {
        auto a = with(std::move(head));
        a.insert(a.end(), post.begin(), post.end());
        a.insert(a.end(), tail.begin(), tail.end());
        return a;
    };
    run(with_post({"eval"}, {"--features", p("scene/shelf.fimg"), "--distances", p("scene/shelf.dimg"), "--masks",
                             p("scene/shelf.mimg"), "--out-prefix", p("eval/shelf")}));
    run(with({"score", "--traj", "1=" + p("eval/shelf.rimg"), "--traj", "2=" + p("eval/shelf_masked.rimg"), "--out",
              p("scores.csv"), "--frames-out", p("frames.csv")}));
    run(with({"rank", "--scores", p("scores.csv"), "--out", p("rank.txt")}), true);
    {
        std::ofstream f(p("scene_feature.txt"));
        for (Eigen::Index i = 0; i < world.categories[1].mean.size(); ++i) f << fmt::format("{} ", world.categories[1].mean(i));
    }
    run(with_post({"radius"}, {"--scene-feature", p("scene_feature.txt")}), true);
    run(with_post({"plan"}, {"--depth", p("scene/shelf.dimg"), "--features", p("scene/shelf.fimg"), "--start=-0.9,0,0.05",
                             "--goal=0.9,0,0.05", "--bounds-max", "1,1,2", "--resolution", "0.05", "--out", p("path.txt"),
                             "--obstacles-out", p("balls.txt")}));
    run(with({"plan", "--obstacles", p("balls.txt"), "--start=-0.9,0,0.05", "--goal=0.9,0.3,0.05", "--bounds-max",
              "1,1,2", "--resolution", "0.05", "--out", p("path2.txt")}));
    run(with({"compare", "--a", p("path.txt"), "--b", p("path2.txt")}), true);
    return captured;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / fmt::format("bayesrisk_accept_{}", ::getpid());
    fs::remove_all(root);
    std::string err_a, err_b;
    const auto out_a = run_cli_suite(root / "a", err_a);
    const auto out_b = run_cli_suite(root / "b", err_b);
    if (!err_a.empty() || !err_b.empty()) {
        fs::remove_all(root);
        return {false, "CLI run failed: " + (err_a.empty() ? err_b : err_a)};
    }
    const auto snap_a = snapshot(root / "a"), snap_b = snapshot(root / "b");
    std::size_t same = 0;
    std::string diff;
    for (const auto& [name, bytes] : snap_a) {
        const auto it = snap_b.find(name);
        if (it != snap_b.end() && it->second == bytes) ++same;
        else diff += " " + name;
    }
    fs::remove_all(root);
    const bool pass = diff.empty() && snap_a.size() == snap_b.size() && out_a == out_b;
    return {pass, fmt::format("{}/{} output files byte-identical across two runs, terminal outputs {}{}", same,
                              snap_a.size(), out_a == out_b ? "identical" : "differ",
                              diff.empty() ? "" : "; differing:" + diff)};
}

}  // namespace

int main(int argc, char** argv) {
    // Optional criterion numbers restrict the run.
    std::vector<bool> selected(11, argc == 1);
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > 10) {
            std::cerr << "usage: bayesrisk_acceptance [criterion 1..10 ...]\n";
            return 2;
        }
        selected[n] = true;
    }
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"attenuated prior closed form", closed_form},
        {"ranking consistency of viability and risk", ranking_consistency},
        {"Bezier monotonicity, fit and inverse", bezier_suite},
        {"likelihood gradient and symmetry", gradient_check},
        {"learning on synthetic demonstrations", learning},
        {"object and risk lookup tables", prior_suite},
        {"end-to-end shelf ranking", end_to_end_ranking},
        {"reference trajectory scores", appendix_fixture},
        {"planner", planner_suite},
        {"CLI determinism", determinism},
    };
    int failures = 0, ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i + 1]) continue;
        ++ran;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw: {}", e.what())};
        }
        failures += !o.pass;
        std::cout << fmt::format("criterion {:>2}: {} {} | {}", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail)
                  << std::endl;
    }
    std::cout << fmt::format("{}/{} criteria passed", ran - failures, ran) << std::endl;
    return failures == 0 ? 0 : 1;
}
