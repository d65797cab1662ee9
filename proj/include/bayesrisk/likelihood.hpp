#pragma once

// Learned likelihood: maps an unordered pair of features to the control
// points of a distance CDF.
//
// The two features are two tokens of a small transformer encoder with no
// positional encoding:
//
//     h_t   = W_in x_t + b_in
//     per layer:
//       r_t = h_t + W_o MHA(h)_t + b_o          (8 heads, softmax over the 2 tokens)
//       h_t = r_t + W_2 gelu(W_1 r_t + b_1) + b_2
//     p     = (h_0 + h_1) / 2
//     cp    = running_max(sigmoid(W_out p + b_out))
//
// Each token's attention sums are accumulated as (self, other), so swapping
// the inputs permutes the tokens and leaves the pooled vector bitwise equal.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "bayesrisk/bezier.hpp"
#include "bayesrisk/demos.hpp"
#include "bayesrisk/types.hpp"

namespace bayesrisk {

inline constexpr std::size_t kAttentionHeads = 8;

struct ModelShape {
    std::size_t feature_dim = 0;
    std::size_t width = 64;
    std::size_t layers = 2;
    std::size_t heads = kAttentionHeads;
    std::size_t ffn_hidden = 128;
    double d_max = kDefaultDMax;

    std::size_t parameter_count() const;
    void validate() const;
};

struct AttentionLayer {
    Eigen::MatrixXd wq, wk, wv, wo;  // width x width
    Eigen::VectorXd bq, bk, bv, bo;
    Eigen::MatrixXd w1;  // ffn_hidden x width
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // width x ffn_hidden
    Eigen::VectorXd b2;
};

// Every trainable tensor. Gradients share the same layout.
struct LikelihoodParams {
    Eigen::MatrixXd w_in;  // width x feature_dim
    Eigen::VectorXd b_in;
    std::vector<AttentionLayer> layers;
    Eigen::MatrixXd w_out;  // 10 x width
    Eigen::VectorXd b_out;

    static LikelihoodParams zeros(const ModelShape& shape);

    // Visits tensors in a fixed order: f(tensor) where tensor is a
    // MatrixXd& or VectorXd& (const-qualified for the const overload).
    template <typename F>
    void for_each(F&& f) {
        visit_all(*this, f);
    }
    template <typename F>
    void for_each(F&& f) const {
        visit_all(*this, f);
    }

    std::size_t size() const;

private:
    template <typename Self, typename F>
    static void visit_all(Self& self, F& f) {
        f(self.w_in);
        f(self.b_in);
        for (auto& l : self.layers) {
            f(l.wq), f(l.bq), f(l.wk), f(l.bk), f(l.wv), f(l.bv), f(l.wo), f(l.bo);
            f(l.w1), f(l.b1), f(l.w2), f(l.b2);
        }
        f(self.w_out);
        f(self.b_out);
    }
};

class LikelihoodModel {
public:
    LikelihoodModel() = default;
    LikelihoodModel(const ModelShape& shape, LikelihoodParams params);

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    static LikelihoodModel init(std::size_t feature_dim, std::size_t width, std::size_t layers, std::uint64_t seed,
                                double d_max = kDefaultDMax);

    const ModelShape& shape() const { return shape_; }
    const LikelihoodParams& params() const { return params_; }
    LikelihoodParams& params() { return params_; }

    // Non-decreasing control points in (0, 1). Symmetric in (a, b).
    ControlPoints forward(const Feature& a, const Feature& b) const;
    BezierCurve predict_curve(const Feature& a, const Feature& b) const;

private:
    ModelShape shape_;
    LikelihoodParams params_;
};

double mse_loss(const ControlPoints& pred, const ControlPoints& target);

struct GradientResult {
    LikelihoodParams grad;
    double loss = 0.0;
};

// Exact reverse-mode gradient of mse_loss(forward(a, b), target). The running
// max passes gradient to the element that currently holds the maximum.
GradientResult backward(const LikelihoodModel& model, const TrainingExample& example);

struct TrainingConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

// Mean loss over the dataset.
double dataset_loss(const LikelihoodModel& model, const std::vector<TrainingExample>& examples);

// Mini-batch SGD with momentum. Returns the dataset loss before training
// followed by the dataset loss after every epoch (epochs + 1 entries).
std::vector<double> train(LikelihoodModel& model, const std::vector<TrainingExample>& examples,
                          const TrainingConfig& config);

// Binary container: "BRLM", u32 version, architecture header, then every
// tensor as u32 rows, u32 cols and row-major little-endian float64 values.
void save_model(const LikelihoodModel& model, const std::filesystem::path& path);
LikelihoodModel load_model(const std::filesystem::path& path,
                           std::optional<std::size_t> expected_feature_dim = std::nullopt);

}  // namespace bayesrisk
