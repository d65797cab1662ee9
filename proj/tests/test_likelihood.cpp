#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "bayesrisk/errors.hpp"
#include "bayesrisk/likelihood.hpp"
#include "test_util.hpp"

using namespace bayesrisk;

namespace {

Feature random_feature(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    Feature f(static_cast<Eigen::Index>(dim));
    for (auto& v : f) v = n(rng);
    return f;
}

bool params_equal(const LikelihoodParams& a, const LikelihoodParams& b) {
    std::vector<const double*> pa, pb;
    std::vector<Eigen::Index> sa, sb;
    a.for_each([&](const auto& t) { pa.push_back(t.data()), sa.push_back(t.size()); });
    b.for_each([&](const auto& t) { pb.push_back(t.data()), sb.push_back(t.size()); });
    if (sa != sb) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (Eigen::Index j = 0; j < sa[i]; ++j)
            if (pa[i][j] != pb[i][j]) return false;
    return true;
}

std::vector<double*> parameter_pointers(LikelihoodParams& p) {
    std::vector<double*> out;
    p.for_each([&](auto& t) {
        for (Eigen::Index j = 0; j < t.size(); ++j) out.push_back(t.data() + j);
    });
    return out;
}

std::vector<double> flatten(const LikelihoodParams& p) {
    std::vector<double> out;
    p.for_each([&](const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); });
    return out;
}

}  // namespace

TEST_CASE("init_model") {
    const auto a = LikelihoodModel::init(32, 64, 2, 0);
    const auto b = LikelihoodModel::init(32, 64, 2, 0);
    CHECK(params_equal(a.params(), b.params()));
    CHECK_FALSE(params_equal(a.params(), LikelihoodModel::init(32, 64, 2, 1).params()));
    CHECK_THROWS_AS(LikelihoodModel::init(32, 7, 2, 0), ConfigError);
    CHECK_THROWS_AS(LikelihoodModel::init(32, 64, 0, 0), ConfigError);
    CHECK_THROWS_AS(LikelihoodModel::init(0, 64, 2, 0), ConfigError);

    // Independent tally over the tensors actually allocated.
    std::size_t tally = 0;
    a.params().for_each([&](const auto& t) { tally += static_cast<std::size_t>(t.rows() * t.cols()); });
    CHECK(tally == a.shape().parameter_count());
    // 64*32 + 64 + 2 * (4 * (64*64 + 64) + (128*64 + 128) + (64*128 + 64)) + 10*64 + 10
    CHECK(a.shape().parameter_count() == 69194);
}

TEST_CASE("forward is permutation invariant and yields valid control points") {
    const auto model = LikelihoodModel::init(12, 32, 2, 5);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const Feature a = random_feature(rng, 12);
        const Feature b = random_feature(rng, 12);
        const ControlPoints ab = model.forward(a, b);
        const ControlPoints ba = model.forward(b, a);
        CHECK(ab == ba);
        CHECK(std::is_sorted(ab.begin(), ab.end()));
        CHECK(ab.front() > 0.0);
        CHECK(ab.back() < 1.0);
    }
    CHECK_THROWS_AS(model.forward(Feature::Zero(11), Feature::Zero(12)), SchemaError);
}

TEST_CASE("forward with a zero-weight output head is sigmoid of the bias") {
    auto model = LikelihoodModel::init(4, 16, 1, 2);
    model.params().w_out.setZero();
    model.params().b_out.setConstant(0.3);
    std::mt19937_64 rng(2);
    const auto cp = model.forward(random_feature(rng, 4), random_feature(rng, 4));
    for (double c : cp) CHECK(c == doctest::Approx(1.0 / (1.0 + std::exp(-0.3))).epsilon(1e-15));
}

TEST_CASE("mse_loss") {
    ControlPoints target{};
    for (std::size_t k = 0; k < kControlPoints; ++k) target[k] = k / 10.0;
    CHECK(mse_loss(target, target) == 0.0);
    ControlPoints shifted = target;
    for (double& v : shifted) v += 0.1;
    CHECK(mse_loss(shifted, target) == doctest::Approx(0.01).epsilon(1e-12));

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ControlPoints p{}, t{};
    for (std::size_t k = 0; k < kControlPoints; ++k) p[k] = unit(rng), t[k] = unit(rng);
    double brute = 0.0;
    for (std::size_t k = 0; k < kControlPoints; ++k) brute += std::pow(p[k] - t[k], 2);
    CHECK(mse_loss(p, t) == doctest::Approx(brute / 10.0).epsilon(1e-14));
}

TEST_CASE("backward: zero signal gives zero gradient") {
    const auto model = LikelihoodModel::init(6, 16, 2, 3);
    std::mt19937_64 rng(8);
    TrainingExample ex{random_feature(rng, 6), random_feature(rng, 6), {}};
    ex.target = model.forward(ex.feat_a, ex.feat_b);
    const auto g = backward(model, ex);
    CHECK(g.loss == 0.0);
    for (double v : flatten(g.grad)) CHECK(v == 0.0);
}

TEST_CASE("backward matches central finite differences for every parameter") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        auto model = LikelihoodModel::init(6, 16, 2, seed);
        std::mt19937_64 rng(seed);
        TrainingExample ex{random_feature(rng, 6), random_feature(rng, 6), {}};
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (double& t : ex.target) t = unit(rng);
        std::sort(ex.target.begin(), ex.target.end());

        const auto analytic = flatten(backward(model, ex).grad);
        auto pointers = parameter_pointers(model.params());
        REQUIRE(pointers.size() == analytic.size());
        const double eps = 1e-5;
        double worst = 0.0;
        for (std::size_t i = 0; i < pointers.size(); ++i) {
            const double saved = *pointers[i];
            *pointers[i] = saved + eps;
            const double up = mse_loss(model.forward(ex.feat_a, ex.feat_b), ex.target);
            *pointers[i] = saved - eps;
            const double down = mse_loss(model.forward(ex.feat_a, ex.feat_b), ex.target);
            *pointers[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
        }
        INFO("seed " << seed);
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("backward is symmetric in the feature pair") {
    const auto model = LikelihoodModel::init(6, 16, 2, 21);
    std::mt19937_64 rng(21);
    TrainingExample ab{random_feature(rng, 6), random_feature(rng, 6), {}};
    for (std::size_t k = 0; k < kControlPoints; ++k) ab.target[k] = k / 9.0;
    TrainingExample ba{ab.feat_b, ab.feat_a, ab.target};
    CHECK(params_equal(backward(model, ab).grad, backward(model, ba).grad));
}

TEST_CASE("train overfits a single example") {
    auto model = LikelihoodModel::init(8, 16, 1, 7);
    std::mt19937_64 rng(7);
    TrainingExample ex{random_feature(rng, 8), random_feature(rng, 8), {}};
    for (std::size_t k = 0; k < kControlPoints; ++k) ex.target[k] = 0.05 + 0.1 * k;
    TrainingConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 500;  // one step per epoch
    cfg.batch_size = 1;
    const auto history = train(model, {ex}, cfg);
    CHECK(history.size() == 501);
    CHECK(history.back() <= 1e-4);
}

TEST_CASE("train is deterministic and rejects empty data") {
    std::mt19937_64 rng(9);
    std::vector<TrainingExample> data;
    for (int i = 0; i < 40; ++i) {
        TrainingExample ex{random_feature(rng, 5), random_feature(rng, 5), {}};
        for (std::size_t k = 0; k < kControlPoints; ++k) ex.target[k] = std::min(1.0, (k + i % 3) / 10.0);
        data.push_back(ex);
    }
    TrainingConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.seed = 3;
    auto m1 = LikelihoodModel::init(5, 16, 1, 1);
    auto m2 = LikelihoodModel::init(5, 16, 1, 1);
    CHECK(train(m1, data, cfg) == train(m2, data, cfg));
    CHECK(params_equal(m1.params(), m2.params()));
    CHECK_THROWS_AS(train(m1, {}, cfg), DatasetError);
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train(m1, data, cfg), ConfigError);
}

TEST_CASE("save and load") {
    const TempDir dir;
    const auto model = LikelihoodModel::init(7, 16, 2, 4, 1.5);
    const auto path = dir.path / "model.bin";
    save_model(model, path);
    const auto loaded = load_model(path, 7);
    CHECK(loaded.shape().d_max == 1.5);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        const Feature a = random_feature(rng, 7), b = random_feature(rng, 7);
        CHECK(loaded.forward(a, b) == model.forward(a, b));
    }
    CHECK_THROWS_AS(load_model(path, 8), SchemaError);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::copy_file(path, dir.path / "cut.bin");
    std::filesystem::resize_file(dir.path / "cut.bin", size - 13);
    CHECK_THROWS_AS(load_model(dir.path / "cut.bin"), ParseError);

    {
        std::ofstream junk(dir.path / "junk.bin", std::ios::binary);
        junk << "not a model";
    }
    CHECK_THROWS_AS(load_model(dir.path / "junk.bin"), ParseError);
    CHECK_THROWS_AS(load_model(dir.path / "missing.bin"), IoError);
}
