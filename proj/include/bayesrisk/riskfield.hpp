#pragma once

// Posterior viability curves and dense per-pixel risk.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bayesrisk/bezier.hpp"
#include "bayesrisk/core.hpp"
#include "bayesrisk/likelihood.hpp"
#include "bayesrisk/prior.hpp"
#include "bayesrisk/types.hpp"

namespace bayesrisk {

inline constexpr std::size_t kPosteriorGrid = 100;

// ---- images ---------------------------------------------------------------

// Row-major H x W x D.
struct FeatureImage {
    std::size_t height = 0, width = 0, dim = 0;
    std::vector<double> data;

    FeatureImage() = default;
    FeatureImage(std::size_t h, std::size_t w, std::size_t d) : height(h), width(w), dim(d), data(h * w * d, 0.0) {}
    Feature pixel(std::size_t row, std::size_t col) const;
    void set_pixel(std::size_t row, std::size_t col, const Feature& f);
};

// Meters. NaN (or any negative / non-finite value) marks invalid depth.
struct DistanceImage {
    std::size_t height = 0, width = 0;
    std::vector<double> data;

    DistanceImage() = default;
    DistanceImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}
    double& at(std::size_t row, std::size_t col) { return data[row * width + col]; }
    double at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
    bool valid(std::size_t i) const;
};

// Label 0 is background.
struct MaskImage {
    std::size_t height = 0, width = 0;
    std::vector<std::uint16_t> labels;

    MaskImage() = default;
    MaskImage(std::size_t h, std::size_t w) : height(h), width(w), labels(h * w, 0) {}
};

// Risk in [0, 1]; NaN for invalid pixels. `reasons` is empty or one per pixel.
struct RiskImage {
    std::size_t height = 0, width = 0;
    std::vector<double> data;
    std::vector<std::string> reasons;

    RiskImage() = default;
    RiskImage(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0.0) {}
    double& at(std::size_t row, std::size_t col) { return data[row * width + col]; }
    double at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
    bool valid(std::size_t i) const { return !std::isnan(data[i]); }
    std::vector<double> valid_values() const;
};

// Binary formats: 4-byte magic, u32 header fields, little-endian payload.
//   FIMG: H, W, D, float32 H*W*D      DIMG: H, W, float32 H*W (NaN invalid)
//   MIMG: H, W, u16 H*W               RIMG: same layout as DIMG
FeatureImage read_feature_image(const std::filesystem::path& path);
void write_feature_image(const FeatureImage& img, const std::filesystem::path& path);
DistanceImage read_distance_image(const std::filesystem::path& path);
void write_distance_image(const DistanceImage& img, const std::filesystem::path& path);
MaskImage read_mask_image(const std::filesystem::path& path);
void write_mask_image(const MaskImage& img, const std::filesystem::path& path);
RiskImage read_risk_image(const std::filesystem::path& path);
void write_risk_image(const RiskImage& img, const std::filesystem::path& path);

// ---- posterior ------------------------------------------------------------

struct PosteriorContext {
    std::string manipulated;
    std::string matched;          // category of the scene feature
    double match_distance = 0.0;  // feature-space distance of that match
    RiskEntry rating;
};

// v(d) = g(d) * h'(d) tabulated at d_i = i * d_max / 99, i = 0..99.
class PosteriorCurve {
public:
    PosteriorCurve() = default;
    PosteriorCurve(PosteriorContext context, BezierCurve likelihood, SafeProbability prior,
                   const AttenuationConfig& cfg = {});

    const PosteriorContext& context() const { return context_; }
    const BezierCurve& likelihood() const { return likelihood_; }
    SafeProbability prior() const { return prior_; }
    double d_max() const { return likelihood_.d_max(); }
    const std::array<double, kPosteriorGrid>& distances() const { return grid_d_; }
    const std::array<double, kPosteriorGrid>& values() const { return grid_v_; }

    // Direct product of the factors at d (no interpolation).
    double viability_exact(double d) const;
    // Linear interpolation of the table, clamped to v(d_max) beyond the grid.
    double viability(double d) const;

private:
    PosteriorContext context_;
    BezierCurve likelihood_;
    SafeProbability prior_;
    AttenuationConfig cfg_;
    std::array<double, kPosteriorGrid> grid_d_{};
    std::array<double, kPosteriorGrid> grid_v_{};
};

PosteriorCurve posterior_curve(const LikelihoodModel& model, const ObjectLut& object_lut, const RiskLut& risk_lut,
                               const std::string& manipulated, const Feature& manip_feat, const Feature& scene_feat,
                               const AttenuationConfig& cfg = {});

// 1 - viability(d). Throws DomainError for d < 0 or NaN.
RiskValue risk_at(const PosteriorCurve& curve, double d);

struct RiskImageStats {
    std::size_t valid_pixels = 0;
    std::size_t distinct_contexts = 0;  // forward passes actually run
};

// Per valid pixel, risk_at(posterior_curve(pixel feature), pixel distance),
// with the rating reason attached. Curves are memoized on the exact feature
// bytes, which does not change any value.
RiskImage risk_image(const LikelihoodModel& model, const ObjectLut& object_lut, const RiskLut& risk_lut,
                     const std::string& manipulated, const Feature& manip_feat, const FeatureImage& features,
                     const DistanceImage& distances, const AttenuationConfig& cfg = {},
                     RiskImageStats* stats = nullptr);

// Each non-zero label's valid pixels become the label's mean valid risk.
RiskImage average_over_masks(const RiskImage& risk, const MaskImage& masks);

// ---- rendering ------------------------------------------------------------

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Polynomial approximation of the turbo colormap; x is clamped to [0, 1].
Rgb turbo(double x);

// Binary PPM (P6); invalid pixels are black.
void render_turbo(const RiskImage& risk, const std::filesystem::path& path);

}  // namespace bayesrisk
