#include "bayesrisk/likelihood.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <span>

#include <fmt/format.h>

#include "bayesrisk/errors.hpp"
#include "binary_io.hpp"

namespace bayesrisk {

namespace {

constexpr std::array<char, 4> kModelMagic{'B', 'R', 'L', 'M'};
constexpr std::uint32_t kModelVersion = 1;

std::vector<std::span<double>> flat_views(LikelihoodParams& p) {
    std::vector<std::span<double>> views;
    p.for_each([&](auto& t) { views.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
    return views;
}

std::vector<std::span<const double>> flat_views(const LikelihoodParams& p) {
    std::vector<std::span<const double>> views;
    p.for_each([&](const auto& t) { views.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
    return views;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z))); }

double gelu_grad(double z) {
    const double th = std::tanh(kGeluC * (z + kGeluA * z * z * z));
    return 0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::Index offset, Eigen::Index len) {
    double s = 0.0;
    for (Eigen::Index i = offset; i < offset + len; ++i) s += a(i) * b(i);
    return s;
}

struct LayerCache {
    std::array<Eigen::VectorXd, 2> h_in, q, k, v, ctx, r, z, g;
    // attn[head][token] = {weight on self, weight on other}
    std::vector<std::array<std::array<double, 2>, 2>> attn;
};

struct ForwardCache {
    std::array<Eigen::VectorXd, 2> x;
    std::vector<LayerCache> layers;
    Eigen::VectorXd pooled;
    std::array<double, kControlPoints> sig{};
    std::array<std::size_t, kControlPoints> source{};  // index of the sigmoid feeding each output
    ControlPoints out{};
};

void check_dims(const ModelShape& shape, const Feature& a, const Feature& b) {
    if (static_cast<std::size_t>(a.size()) != shape.feature_dim ||
        static_cast<std::size_t>(b.size()) != shape.feature_dim) {
        throw SchemaError(fmt::format("likelihood: expected feature dimension {}, got {} and {}", shape.feature_dim,
                                      a.size(), b.size()));
    }
}

ForwardCache run_forward(const ModelShape& shape, const LikelihoodParams& p, const Feature& a, const Feature& b) {
    check_dims(shape, a, b);
    ForwardCache c;
    c.x = {a, b};
    std::array<Eigen::VectorXd, 2> h{p.w_in * a + p.b_in, p.w_in * b + p.b_in};
    const auto head_dim = static_cast<Eigen::Index>(shape.width / shape.heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    c.layers.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.layers[l];
        auto& lc = c.layers[l];
        lc.attn.resize(shape.heads);
        for (int t = 0; t < 2; ++t) {
            lc.h_in[t] = h[t];
            lc.q[t] = L.wq * h[t] + L.bq;
            lc.k[t] = L.wk * h[t] + L.bk;
            lc.v[t] = L.wv * h[t] + L.bv;
        }
        for (int t = 0; t < 2; ++t) {
            const int o = 1 - t;
            lc.ctx[t].resize(static_cast<Eigen::Index>(shape.width));
            for (std::size_t e = 0; e < shape.heads; ++e) {
                const Eigen::Index off = static_cast<Eigen::Index>(e) * head_dim;
                const double s_self = dot(lc.q[t], lc.k[t], off, head_dim) * scale;
                const double s_other = dot(lc.q[t], lc.k[o], off, head_dim) * scale;
                const double m = std::max(s_self, s_other);
                const double e_self = std::exp(s_self - m);
                const double e_other = std::exp(s_other - m);
                const double z = e_self + e_other;
                const double a_self = e_self / z;
                const double a_other = e_other / z;
                lc.attn[e][t] = {a_self, a_other};
                for (Eigen::Index i = off; i < off + head_dim; ++i) {
                    lc.ctx[t](i) = a_self * lc.v[t](i) + a_other * lc.v[o](i);
                }
            }
        }
        for (int t = 0; t < 2; ++t) {
            lc.r[t] = h[t] + L.wo * lc.ctx[t] + L.bo;
            lc.z[t] = L.w1 * lc.r[t] + L.b1;
            lc.g[t] = lc.z[t].unaryExpr([](double v) { return gelu(v); });
            h[t] = lc.r[t] + L.w2 * lc.g[t] + L.b2;
        }
    }

    c.pooled = 0.5 * (h[0] + h[1]);
    const Eigen::VectorXd logits = p.w_out * c.pooled + p.b_out;
    std::size_t best = 0;
    for (std::size_t k = 0; k < kControlPoints; ++k) {
        c.sig[k] = sigmoid(logits(static_cast<Eigen::Index>(k)));
        if (k == 0 || c.sig[k] > c.sig[best]) best = k;
        c.source[k] = best;
        c.out[k] = c.sig[best];
    }
    return c;
}

template <typename Rng>
void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Row-major fill order, independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = dist(rng);
}

}  // namespace

std::size_t ModelShape::parameter_count() const {
    const std::size_t w = width, d = feature_dim, f = ffn_hidden;
    const std::size_t per_layer = 4 * (w * w + w) + (f * w + f) + (w * f + w);
    return (w * d + w) + layers * per_layer + (kControlPoints * w + kControlPoints);
}

void ModelShape::validate() const {
    if (feature_dim == 0) throw ConfigError("likelihood: feature dimension must be positive");
    if (width == 0 || heads == 0 || width % heads != 0) {
        throw ConfigError(fmt::format("likelihood: width {} must be a positive multiple of {} heads", width, heads));
    }
    if (layers == 0) throw ConfigError("likelihood: at least one attention layer is required");
    if (ffn_hidden == 0) throw ConfigError("likelihood: feed-forward width must be positive");
    if (!(d_max > 0.0)) throw ConfigError("likelihood: d_max must be positive");
}

LikelihoodParams LikelihoodParams::zeros(const ModelShape& s) {
    const auto w = static_cast<Eigen::Index>(s.width);
    const auto d = static_cast<Eigen::Index>(s.feature_dim);
    const auto f = static_cast<Eigen::Index>(s.ffn_hidden);
    const auto n = static_cast<Eigen::Index>(kControlPoints);
    LikelihoodParams p;
    p.w_in = Eigen::MatrixXd::Zero(w, d);
    p.b_in = Eigen::VectorXd::Zero(w);
    p.layers.resize(s.layers);
    for (auto& l : p.layers) {
        l.wq = l.wk = l.wv = l.wo = Eigen::MatrixXd::Zero(w, w);
        l.bq = l.bk = l.bv = l.bo = Eigen::VectorXd::Zero(w);
        l.w1 = Eigen::MatrixXd::Zero(f, w);
        l.b1 = Eigen::VectorXd::Zero(f);
        l.w2 = Eigen::MatrixXd::Zero(w, f);
        l.b2 = Eigen::VectorXd::Zero(w);
    }
    p.w_out = Eigen::MatrixXd::Zero(n, w);
    p.b_out = Eigen::VectorXd::Zero(n);
    return p;
}

std::size_t LikelihoodParams::size() const {
    std::size_t n = 0;
    for_each([&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

LikelihoodModel::LikelihoodModel(const ModelShape& shape, LikelihoodParams params)
    : shape_(shape), params_(std::move(params)) {
    shape_.validate();
    if (params_.size() != shape_.parameter_count() || params_.layers.size() != shape_.layers) {
        throw SchemaError("likelihood: parameter tensors do not match the architecture");
    }
}

LikelihoodModel LikelihoodModel::init(std::size_t feature_dim, std::size_t width, std::size_t layers,
                                      std::uint64_t seed, double d_max) {
    ModelShape shape{feature_dim, width, layers, kAttentionHeads, 2 * width, d_max};
    shape.validate();
    LikelihoodParams p = LikelihoodParams::zeros(shape);
    std::mt19937_64 rng(seed);
    const auto bound = [](Eigen::Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    fill_uniform(p.w_in, bound(p.w_in.cols()), rng);
    for (auto& l : p.layers) {
        for (Eigen::MatrixXd* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2}) fill_uniform(*m, bound(m->cols()), rng);
    }
    // Small head plus an increasing bias ramp: the sigmoid outputs start in
    // order, so the running max does not begin with shadowed (gradient-free)
    // entries.
    fill_uniform(p.w_out, 0.1 * bound(p.w_out.cols()), rng);
    for (Eigen::Index k = 0; k < p.b_out.size(); ++k) {
        const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(p.b_out.size());
        p.b_out(k) = std::log(q / (1.0 - q));
    }
    return LikelihoodModel(shape, std::move(p));
}

ControlPoints LikelihoodModel::forward(const Feature& a, const Feature& b) const {
    return run_forward(shape_, params_, a, b).out;
}

BezierCurve LikelihoodModel::predict_curve(const Feature& a, const Feature& b) const {
    return BezierCurve(forward(a, b), shape_.d_max);
}

double mse_loss(const ControlPoints& pred, const ControlPoints& target) {
    double s = 0.0;
    for (std::size_t k = 0; k < kControlPoints; ++k) s += (pred[k] - target[k]) * (pred[k] - target[k]);
    return s / static_cast<double>(kControlPoints);
}

GradientResult backward(const LikelihoodModel& model, const TrainingExample& example) {
    const ModelShape& shape = model.shape();
    const LikelihoodParams& p = model.params();
    const ForwardCache c = run_forward(shape, p, example.feat_a, example.feat_b);

    GradientResult result{LikelihoodParams::zeros(shape), mse_loss(c.out, example.target)};
    LikelihoodParams& g = result.grad;

    // Output head.
    Eigen::VectorXd d_logit = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kControlPoints));
    for (std::size_t k = 0; k < kControlPoints; ++k) {
        const double d_out = 2.0 * (c.out[k] - example.target[k]) / static_cast<double>(kControlPoints);
        d_logit(static_cast<Eigen::Index>(c.source[k])) += d_out;
    }
    for (std::size_t k = 0; k < kControlPoints; ++k) d_logit(static_cast<Eigen::Index>(k)) *= c.sig[k] * (1.0 - c.sig[k]);
    g.w_out = d_logit * c.pooled.transpose();
    g.b_out = d_logit;
    const Eigen::VectorXd d_pooled = p.w_out.transpose() * d_logit;
    std::array<Eigen::VectorXd, 2> dh{0.5 * d_pooled, 0.5 * d_pooled};

    const auto head_dim = static_cast<Eigen::Index>(shape.width / shape.heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const auto& L = p.layers[li];
        const auto& lc = c.layers[li];
        auto& G = g.layers[li];

        std::array<Eigen::VectorXd, 2> dr, dctx;
        for (int t = 0; t < 2; ++t) {
            // h_out = r + W2 gelu(W1 r + b1) + b2
            G.w2 += dh[t] * lc.g[t].transpose();
            G.b2 += dh[t];
            const Eigen::VectorXd dg = L.w2.transpose() * dh[t];
            const Eigen::VectorXd dz =
                dg.cwiseProduct(lc.z[t].unaryExpr([](double v) { return gelu_grad(v); }));
            G.w1 += dz * lc.r[t].transpose();
            G.b1 += dz;
            dr[t] = dh[t] + L.w1.transpose() * dz;
            // r = h_in + Wo ctx + bo
            G.wo += dr[t] * lc.ctx[t].transpose();
            G.bo += dr[t];
            dctx[t] = L.wo.transpose() * dr[t];
        }

        std::array<Eigen::VectorXd, 2> dq, dk, dv;
        for (int t = 0; t < 2; ++t) {
            dq[t] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.width));
            dk[t] = dq[t];
            dv[t] = dq[t];
        }
        for (int t = 0; t < 2; ++t) {
            const int o = 1 - t;
            for (std::size_t e = 0; e < shape.heads; ++e) {
                const Eigen::Index off = static_cast<Eigen::Index>(e) * head_dim;
                const auto [a_self, a_other] = lc.attn[e][t];
                const double da_self = dot(dctx[t], lc.v[t], off, head_dim);
                const double da_other = dot(dctx[t], lc.v[o], off, head_dim);
                const double mean = a_self * da_self + a_other * da_other;
                const double ds_self = a_self * (da_self - mean) * scale;
                const double ds_other = a_other * (da_other - mean) * scale;
                for (Eigen::Index i = off; i < off + head_dim; ++i) {
                    dv[t](i) += a_self * dctx[t](i);
                    dv[o](i) += a_other * dctx[t](i);
                    dq[t](i) += ds_self * lc.k[t](i) + ds_other * lc.k[o](i);
                    dk[t](i) += ds_self * lc.q[t](i);
                    dk[o](i) += ds_other * lc.q[t](i);
                }
            }
        }
        for (int t = 0; t < 2; ++t) {
            G.wq += dq[t] * lc.h_in[t].transpose();
            G.bq += dq[t];
            G.wk += dk[t] * lc.h_in[t].transpose();
            G.bk += dk[t];
            G.wv += dv[t] * lc.h_in[t].transpose();
            G.bv += dv[t];
            dh[t] = dr[t] + L.wq.transpose() * dq[t] + L.wk.transpose() * dk[t] + L.wv.transpose() * dv[t];
        }
    }

    for (int t = 0; t < 2; ++t) {
        g.w_in += dh[t] * c.x[t].transpose();
        g.b_in += dh[t];
    }
    return result;
}

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || epochs == 0 || batch_size == 0) {
        throw ConfigError("training: learning rate, epochs and batch size must be positive, momentum in [0, 1)");
    }
}

double dataset_loss(const LikelihoodModel& model, const std::vector<TrainingExample>& examples) {
    if (examples.empty()) throw DatasetError("dataset_loss: empty dataset");
    double total = 0.0;
    for (const auto& ex : examples) total += mse_loss(model.forward(ex.feat_a, ex.feat_b), ex.target);
    return total / static_cast<double>(examples.size());
}

std::vector<double> train(LikelihoodModel& model, const std::vector<TrainingExample>& examples,
                          const TrainingConfig& config) {
    config.validate();
    if (examples.empty()) throw DatasetError("train: empty dataset");

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    LikelihoodParams velocity = LikelihoodParams::zeros(model.shape());
    LikelihoodParams batch_grad = LikelihoodParams::zeros(model.shape());
    auto param_views = flat_views(model.params());
    auto velocity_views = flat_views(velocity);
    auto batch_views = flat_views(batch_grad);

    std::vector<double> history{dataset_loss(model, examples)};
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            for (auto& v : batch_views) std::fill(v.begin(), v.end(), 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const GradientResult gr = backward(model, examples[order[i]]);
                const auto views = flat_views(gr.grad);
                for (std::size_t t = 0; t < views.size(); ++t)
                    for (std::size_t j = 0; j < views[t].size(); ++j) batch_views[t][j] += views[t][j];
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t t = 0; t < param_views.size(); ++t) {
                for (std::size_t j = 0; j < param_views[t].size(); ++j) {
                    velocity_views[t][j] = config.momentum * velocity_views[t][j] + batch_views[t][j] * inv;
                    param_views[t][j] -= config.learning_rate * velocity_views[t][j];
                }
            }
        }
        history.push_back(dataset_loss(model, examples));
    }
    return history;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { detail::put(out, v); }
void put_f64(std::ostream& out, double v) { detail::put(out, v); }
std::uint32_t get_u32(std::istream& in) { return detail::get<std::uint32_t>(in, "model file"); }
double get_f64(std::istream& in) { return detail::get<double>(in, "model file"); }

}  // namespace

void save_model(const LikelihoodModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model file " + path.string());
    const ModelShape& s = model.shape();
    out.write(kModelMagic.data(), kModelMagic.size());
    put_u32(out, kModelVersion);
    for (std::size_t v : {s.feature_dim, s.width, s.layers, s.heads, s.ffn_hidden}) {
        put_u32(out, static_cast<std::uint32_t>(v));
    }
    put_f64(out, s.d_max);
    std::uint32_t tensors = 0;
    model.params().for_each([&](const auto&) { ++tensors; });
    put_u32(out, tensors);
    model.params().for_each([&](const auto& t) {
        put_u32(out, static_cast<std::uint32_t>(t.rows()));
        put_u32(out, static_cast<std::uint32_t>(t.cols()));
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index col = 0; col < t.cols(); ++col) put_f64(out, t(r, col));
    });
    if (!out) throw IoError("failed writing model file " + path.string());
}

LikelihoodModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_feature_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kModelMagic) throw ParseError("not a likelihood model file");
    const std::uint32_t version = get_u32(in);
    if (version != kModelVersion) throw SchemaError(fmt::format("unsupported model version {}", version));

    ModelShape s;
    s.feature_dim = get_u32(in);
    s.width = get_u32(in);
    s.layers = get_u32(in);
    s.heads = get_u32(in);
    s.ffn_hidden = get_u32(in);
    s.d_max = get_f64(in);
    if (s.heads != kAttentionHeads) throw SchemaError(fmt::format("model has {} heads, expected 8", s.heads));
    if (s.layers > 1024 || s.width > (1u << 16) || s.ffn_hidden > (1u << 18) || s.feature_dim > (1u << 20)) {
        throw SchemaError("model header has implausible dimensions");
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw SchemaError(e.what());
    }
    if (expected_feature_dim && *expected_feature_dim != s.feature_dim) {
        throw SchemaError(
            fmt::format("model feature dimension {} does not match expected {}", s.feature_dim, *expected_feature_dim));
    }

    LikelihoodParams p = LikelihoodParams::zeros(s);
    std::uint32_t expected_tensors = 0;
    p.for_each([&](const auto&) { ++expected_tensors; });
    if (get_u32(in) != expected_tensors) throw SchemaError("model tensor count does not match its header");
    p.for_each([&](auto& t) {
        const std::uint32_t rows = get_u32(in);
        const std::uint32_t cols = get_u32(in);
        if (rows != t.rows() || cols != t.cols()) throw SchemaError("model tensor shape does not match its header");
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index col = 0; col < t.cols(); ++col) t(r, col) = get_f64(in);
    });
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after model tensors");
    return LikelihoodModel(s, std::move(p));
}

}  // namespace bayesrisk
