#include "bayesrisk/riskfield.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "bayesrisk/errors.hpp"
#include "binary_io.hpp"

namespace bayesrisk {

namespace {

constexpr std::uint64_t kMaxImageValues = std::uint64_t{1} << 31;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

void put_magic(std::ostream& out, const char* magic) { out.write(magic, 4); }

void expect_magic(std::istream& in, const char* magic, const std::filesystem::path& path) {
    char got[4] = {};
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
        throw ParseError(fmt::format("{} is not a {} file", path.string(), std::string(magic, 4)));
}

std::uint32_t get_dim(std::istream& in, const std::string& what) { return detail::get<std::uint32_t>(in, what); }

void check_count(std::uint64_t n, const std::string& what) {
    if (n > kMaxImageValues) throw SchemaError(what + " header has implausible dimensions");
}

void finish_read(std::istream& in, const std::string& what) {
    if (!detail::at_eof(in)) throw ParseError(what + ": trailing bytes after payload");
}

void finish_write(std::ostream& out, const std::filesystem::path& path) {
    if (!out) throw IoError("failed writing " + path.string());
}

void write_float_plane(const std::vector<double>& data, std::size_t h, std::size_t w, const char* magic,
                       const std::filesystem::path& path) {
    if (data.size() != h * w) throw ContractViolation("image data does not match its dimensions");
    auto out = open_out(path);
    put_magic(out, magic);
    detail::put(out, static_cast<std::uint32_t>(h));
    detail::put(out, static_cast<std::uint32_t>(w));
    for (double v : data) detail::put(out, static_cast<float>(v));
    finish_write(out, path);
}

std::vector<double> read_float_plane(const std::filesystem::path& path, const char* magic, std::size_t& h,
                                     std::size_t& w) {
    auto in = open_in(path);
    const std::string what(magic, 4);
    expect_magic(in, magic, path);
    h = get_dim(in, what);
    w = get_dim(in, what);
    check_count(std::uint64_t{h} * w, what);
    std::vector<double> data(h * w);
    for (double& v : data) v = detail::get<float>(in, what);
    finish_read(in, what);
    return data;
}

}  // namespace

// ---- images ---------------------------------------------------------------

Feature FeatureImage::pixel(std::size_t row, std::size_t col) const {
    Feature f(static_cast<Eigen::Index>(dim));
    const double* p = data.data() + (row * width + col) * dim;
    for (std::size_t i = 0; i < dim; ++i) f(static_cast<Eigen::Index>(i)) = p[i];
    return f;
}

void FeatureImage::set_pixel(std::size_t row, std::size_t col, const Feature& f) {
    if (static_cast<std::size_t>(f.size()) != dim) throw SchemaError("feature dimension does not match image");
    double* p = data.data() + (row * width + col) * dim;
    for (std::size_t i = 0; i < dim; ++i) p[i] = f(static_cast<Eigen::Index>(i));
}

bool DistanceImage::valid(std::size_t i) const { return std::isfinite(data[i]) && data[i] >= 0.0; }

std::vector<double> RiskImage::valid_values() const {
    std::vector<double> out;
    for (double v : data)
        if (!std::isnan(v)) out.push_back(v);
    return out;
}

FeatureImage read_feature_image(const std::filesystem::path& path) {
    auto in = open_in(path);
    expect_magic(in, "FIMG", path);
    FeatureImage img;
    img.height = get_dim(in, "FIMG");
    img.width = get_dim(in, "FIMG");
    img.dim = get_dim(in, "FIMG");
    check_count(std::uint64_t{img.height} * img.width * img.dim, "FIMG");
    img.data.resize(img.height * img.width * img.dim);
    for (double& v : img.data) {
        v = detail::get<float>(in, "FIMG");
        if (!std::isfinite(v)) throw SchemaError("FIMG: non-finite feature value");
    }
    finish_read(in, "FIMG");
    return img;
}

void write_feature_image(const FeatureImage& img, const std::filesystem::path& path) {
    if (img.data.size() != img.height * img.width * img.dim)
        throw ContractViolation("feature image data does not match its dimensions");
    auto out = open_out(path);
    put_magic(out, "FIMG");
    for (std::size_t v : {img.height, img.width, img.dim}) detail::put(out, static_cast<std::uint32_t>(v));
    for (double v : img.data) detail::put(out, static_cast<float>(v));
    finish_write(out, path);
}

DistanceImage read_distance_image(const std::filesystem::path& path) {
    DistanceImage img;
    img.data = read_float_plane(path, "DIMG", img.height, img.width);
    return img;
}

void write_distance_image(const DistanceImage& img, const std::filesystem::path& path) {
    write_float_plane(img.data, img.height, img.width, "DIMG", path);
}

MaskImage read_mask_image(const std::filesystem::path& path) {
    auto in = open_in(path);
    expect_magic(in, "MIMG", path);
    MaskImage img;
    img.height = get_dim(in, "MIMG");
    img.width = get_dim(in, "MIMG");
    check_count(std::uint64_t{img.height} * img.width, "MIMG");
    img.labels.resize(img.height * img.width);
    for (auto& l : img.labels) l = detail::get<std::uint16_t>(in, "MIMG");
    finish_read(in, "MIMG");
    return img;
}

void write_mask_image(const MaskImage& img, const std::filesystem::path& path) {
    if (img.labels.size() != img.height * img.width) throw ContractViolation("mask data does not match its dimensions");
    auto out = open_out(path);
    put_magic(out, "MIMG");
    detail::put(out, static_cast<std::uint32_t>(img.height));
    detail::put(out, static_cast<std::uint32_t>(img.width));
    for (auto l : img.labels) detail::put(out, l);
    finish_write(out, path);
}

RiskImage read_risk_image(const std::filesystem::path& path) {
    RiskImage img;
    img.data = read_float_plane(path, "RIMG", img.height, img.width);
    for (double v : img.data)
        if (!std::isnan(v) && (v < 0.0 || v > 1.0)) throw SchemaError("RIMG: risk value outside [0, 1]");
    return img;
}

void write_risk_image(const RiskImage& img, const std::filesystem::path& path) {
    write_float_plane(img.data, img.height, img.width, "RIMG", path);
}

// ---- posterior ------------------------------------------------------------

PosteriorCurve::PosteriorCurve(PosteriorContext context, BezierCurve likelihood, SafeProbability prior,
                               const AttenuationConfig& cfg)
    : context_(std::move(context)), likelihood_(std::move(likelihood)), prior_(prior), cfg_(cfg) {
    cfg_.validate();
    for (std::size_t i = 0; i < kPosteriorGrid; ++i) {
        grid_d_[i] = static_cast<double>(i) * d_max() / static_cast<double>(kPosteriorGrid - 1);
        grid_v_[i] = viability_exact(grid_d_[i]);
    }
}

double PosteriorCurve::viability_exact(double d) const {
    return compose_viability(likelihood_.evaluate_at_distance(d), attenuate_prior(prior_, d, cfg_)).value();
}

double PosteriorCurve::viability(double d) const {
    if (std::isnan(d) || d < 0.0) throw DomainError("posterior: distance must be non-negative");
    if (d >= d_max()) return grid_v_.back();
    const double step = d_max() / static_cast<double>(kPosteriorGrid - 1);
    const auto i = std::min(static_cast<std::size_t>(d / step), kPosteriorGrid - 2);
    const double frac = std::clamp((d - grid_d_[i]) / step, 0.0, 1.0);
    return grid_v_[i] + (grid_v_[i + 1] - grid_v_[i]) * frac;
}

PosteriorCurve posterior_curve(const LikelihoodModel& model, const ObjectLut& object_lut, const RiskLut& risk_lut,
                               const std::string& manipulated, const Feature& manip_feat, const Feature& scene_feat,
                               const AttenuationConfig& cfg) {
    const CategoryMatch match = match_category(object_lut, scene_feat);
    PosteriorContext ctx{manipulated, match.category, match.distance, risk_lut.lookup(manipulated, match.category)};
    const SafeProbability prior = rating_to_prob(ctx.rating.rating);
    return PosteriorCurve(std::move(ctx), model.predict_curve(manip_feat, scene_feat), prior, cfg);
}

RiskValue risk_at(const PosteriorCurve& curve, double d) {
    return RiskValue(checked_probability(1.0 - curve.viability(d), "risk"));
}

RiskImage risk_image(const LikelihoodModel& model, const ObjectLut& object_lut, const RiskLut& risk_lut,
                     const std::string& manipulated, const Feature& manip_feat, const FeatureImage& features,
                     const DistanceImage& distances, const AttenuationConfig& cfg, RiskImageStats* stats) {
    if (features.height != distances.height || features.width != distances.width)
        throw SchemaError(fmt::format("feature image is {}x{} but distance image is {}x{}", features.height,
                                      features.width, distances.height, distances.width));
    if (features.data.size() != features.height * features.width * features.dim ||
        distances.data.size() != distances.height * distances.width)
        throw SchemaError("image data does not match its dimensions");

    RiskImage out(features.height, features.width);
    out.reasons.assign(out.data.size(), std::string());
    std::unordered_map<std::string, PosteriorCurve> memo;
    RiskImageStats local;
    const std::size_t bytes = features.dim * sizeof(double);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (!distances.valid(i)) {
            out.data[i] = kNaN;
            continue;
        }
        ++local.valid_pixels;
        std::string key(reinterpret_cast<const char*>(features.data.data() + i * features.dim), bytes);
        auto it = memo.find(key);
        if (it == memo.end()) {
            const Feature f = features.pixel(i / features.width, i % features.width);
            it = memo.emplace(std::move(key), posterior_curve(model, object_lut, risk_lut, manipulated, manip_feat, f, cfg))
                     .first;
        }
        out.data[i] = risk_at(it->second, distances.data[i]).value();
        out.reasons[i] = it->second.context().rating.reason;
    }
    local.distinct_contexts = memo.size();
    if (stats) *stats = local;
    return out;
}

RiskImage average_over_masks(const RiskImage& risk, const MaskImage& masks) {
    if (risk.height != masks.height || risk.width != masks.width || masks.labels.size() != risk.data.size())
        throw SchemaError("mask image shape does not match risk image");
    std::map<std::uint16_t, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < risk.data.size(); ++i) {
        if (masks.labels[i] == 0 || !risk.valid(i)) continue;
        auto& [s, n] = sums[masks.labels[i]];
        s += risk.data[i];
        ++n;
    }
    RiskImage out = risk;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (masks.labels[i] == 0 || !out.valid(i)) continue;
        const auto& [s, n] = sums.at(masks.labels[i]);
        out.data[i] = std::clamp(s / static_cast<double>(n), 0.0, 1.0);
    }
    return out;
}

// ---- rendering ------------------------------------------------------------

Rgb turbo(double x) {
    x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, 1.0);
    const auto channel = [x](const std::array<double, 6>& c) {
        const double v = c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * (c[4] + x * c[5]))));
        return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    };
    static constexpr std::array<double, 6> r{0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943};
    static constexpr std::array<double, 6> g{0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604};
    static constexpr std::array<double, 6> b{0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973};
    return {channel(r), channel(g), channel(b)};
}

void render_turbo(const RiskImage& risk, const std::filesystem::path& path) {
    if (risk.data.size() != risk.height * risk.width) throw ContractViolation("risk image data does not match its dimensions");
    auto out = open_out(path);
    out << "P6\n" << risk.width << ' ' << risk.height << "\n255\n";
    for (std::size_t i = 0; i < risk.data.size(); ++i) {
        const Rgb c = risk.valid(i) ? turbo(risk.data[i]) : Rgb{};
        const char px[3] = {static_cast<char>(c.r), static_cast<char>(c.g), static_cast<char>(c.b)};
        out.write(px, 3);
    }
    finish_write(out, path);
}

}  // namespace bayesrisk
