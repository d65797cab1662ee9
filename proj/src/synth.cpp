#include "bayesrisk/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "bayesrisk/assets.hpp"
#include "bayesrisk/errors.hpp"

namespace bayesrisk {

namespace {

constexpr const char* kSynthReason = "synthetic";

Feature draw_around(const Feature& mean, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, stddev);
    Feature f = mean;
    for (auto& v : f) v += g(rng);
    return f;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double to_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(fmt::format("bad number '{}'", s), line_no);
    return v;
}

std::uint64_t to_uint(const std::string& s, std::size_t line_no) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(fmt::format("bad integer '{}'", s), line_no);
    return v;
}

Feature parse_feature(const std::string& text, std::size_t dim, std::size_t line_no) {
    std::istringstream in(text);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) v.push_back(to_double(tok, line_no));
    if (v.size() != dim) throw ParseError(fmt::format("expected {} feature values, got {}", dim, v.size()), line_no);
    return Eigen::Map<const Feature>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string format_feature(const Feature& f) {
    std::string out;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (i) out += ' ';
        out += fmt::format("{}", f(i));
    }
    return out;
}

// Reads "key value" and returns value.
std::string expect_key(std::istream& in, const std::string& key, std::size_t& line_no) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(fmt::format("world file truncated before '{}'", key), line_no + 1);
    ++line_no;
    if (line.rfind(key + " ", 0) != 0) throw ParseError(fmt::format("expected '{}'", key), line_no);
    return line.substr(key.size() + 1);
}

}  // namespace

const SynthCategory& SynthWorld::category(const std::string& name) const {
    for (const auto& c : categories)
        if (c.name == name) return c;
    throw LookupError(fmt::format("unknown synthetic category '{}'", name));
}

int SynthWorld::rating(const std::string& a, const std::string& b) const { return ratings.lookup(a, b).rating; }

double SynthWorld::min_separation() const {
    double best = INFINITY;
    for (std::size_t i = 0; i < categories.size(); ++i)
        for (std::size_t j = i + 1; j < categories.size(); ++j)
            best = std::min(best, (categories[i].mean - categories[j].mean).norm());
    return best;
}

double SynthWorld::max_stddev() const {
    double m = 0.0;
    for (const auto& c : categories) m = std::max(m, c.stddev);
    return m;
}

SynthWorld gen_world(std::size_t n_categories, std::size_t feature_dim, std::uint64_t seed, double stddev) {
    if (n_categories < 2) throw ConfigError("a synthetic world needs at least two categories");
    if (feature_dim == 0) throw ConfigError("feature dimension must be positive");
    if (!(stddev > 0.0)) throw ConfigError("cluster stddev must be positive");
    std::vector<std::string> names;
    for (auto& n : bundled_categories())
        if (n != "table") names.push_back(n);
    if (n_categories > names.size())
        throw ConfigError(fmt::format("at most {} synthetic categories are available", names.size()));

    std::mt19937_64 rng(seed);
    std::shuffle(names.begin(), names.end(), rng);
    names.resize(n_categories);

    SynthWorld world;
    world.feature_dim = feature_dim;
    world.seed = seed;
    std::normal_distribution<double> g(0.0, 1.0);
    for (const auto& name : names) {
        Feature mean(static_cast<Eigen::Index>(feature_dim));
        for (int attempt = 0;; ++attempt) {
            if (attempt == 10000) throw ConfigError("cannot place well-separated cluster means; raise the dimension");
            for (auto& v : mean) v = g(rng);
            bool ok = true;
            for (const auto& c : world.categories) ok = ok && (c.mean - mean).norm() >= kSynthSeparation * stddev;
            if (ok) break;
        }
        world.categories.push_back({name, mean, stddev});
    }
    std::uniform_int_distribution<int> r(1, 5);
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j) world.ratings.insert(names[i], names[j], r(rng), kSynthReason);
    return world;
}

double demo_distance_mean(int rating) {
    if (rating < 1 || rating > 5) throw DomainError(fmt::format("rating {} outside 1..5", rating));
    return 0.15 + 0.25 * (5 - rating);
}

namespace {

double truncated_distance(double mean, std::mt19937_64& rng) {
    std::normal_distribution<double> g(mean, kDemoDistanceStd);
    for (;;) {
        const double d = g(rng);
        if (d >= 0.0) return d;
    }
}

}  // namespace

std::vector<double> sample_demo_distances(int rating, std::size_t n, std::uint64_t seed) {
    const double mean = demo_distance_mean(rating);
    std::mt19937_64 rng(seed);
    std::vector<double> out(n);
    for (auto& d : out) d = truncated_distance(mean, rng);
    return out;
}

DemoLog gen_demos(const SynthWorld& world, std::size_t n_traj_per_pair, std::size_t frames_per_traj,
                  std::uint64_t seed) {
    DemoLog log;
    log.dim = world.feature_dim;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution flip(0.5);
    std::size_t traj = 0;
    for (const auto& [pair, entry] : world.ratings.entries()) {
        const auto& a = world.category(pair.first);
        const auto& b = world.category(pair.second);
        const double mean = demo_distance_mean(entry.rating);
        for (std::size_t t = 0; t < n_traj_per_pair; ++t) {
            const std::string id = std::to_string(++traj);
            // which object is carried does not matter to the symmetric model
            const bool swap = flip(rng);
            const auto& m = swap ? b : a;
            const auto& o = swap ? a : b;
            for (std::size_t f = 0; f < frames_per_traj; ++f) {
                DemoRecord rec;
                rec.traj_id = id;
                rec.frame = static_cast<std::int64_t>(f);
                rec.distance = truncated_distance(mean, rng);
                rec.m_feat = draw_around(m.mean, m.stddev, rng);
                rec.o_feat = draw_around(o.mean, o.stddev, rng);
                log.records.push_back(std::move(rec));
            }
        }
    }
    return log;
}

std::map<std::string, std::vector<Feature>> gen_category_samples(const SynthWorld& world, std::size_t per_category,
                                                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::map<std::string, std::vector<Feature>> out;
    for (const auto& c : world.categories) {
        auto& v = out[c.name];
        for (std::size_t i = 0; i < per_category; ++i) v.push_back(draw_around(c.mean, c.stddev, rng));
    }
    return out;
}

SynthScene gen_scene(const SynthWorld& world, const SceneLayout& layout, std::size_t height, std::size_t width,
                     std::uint64_t seed) {
    if (height == 0 || width == 0) throw ConfigError("scene size must be positive");
    if (layout.regions.size() > 65535) throw ConfigError("too many scene regions");
    const auto& manip = world.category(layout.manipulated);

    SynthScene scene;
    scene.features = FeatureImage(height, width, world.feature_dim);
    scene.distances = DistanceImage(height, width, std::nan(""));
    scene.masks = MaskImage(height, width);
    std::mt19937_64 rng(seed);
    scene.manip_feat = draw_around(manip.mean, manip.stddev, rng);

    for (std::size_t k = 0; k < layout.regions.size(); ++k) {
        const auto& reg = layout.regions[k];
        if (reg.rows == 0 || reg.cols == 0 || reg.row + reg.rows > height || reg.col + reg.cols > width)
            throw ConfigError(fmt::format("scene region {} does not fit in {}x{}", k + 1, height, width));
        if (!(reg.d_near >= 0.0) || !(reg.d_far >= 0.0) || !std::isfinite(reg.d_near) || !std::isfinite(reg.d_far))
            throw ConfigError(fmt::format("scene region {} has an invalid distance", k + 1));
        const auto& cat = world.category(reg.category);
        scene.region_ratings.push_back(world.rating(layout.manipulated, reg.category));
        for (std::size_t r = reg.row; r < reg.row + reg.rows; ++r)
            for (std::size_t c = reg.col; c < reg.col + reg.cols; ++c) {
                auto& label = scene.masks.labels[r * width + c];
                if (label != 0) throw ConfigError(fmt::format("scene regions {} and {} overlap", label, k + 1));
                label = static_cast<std::uint16_t>(k + 1);
                const double t = reg.cols > 1 ? static_cast<double>(c - reg.col) / static_cast<double>(reg.cols - 1) : 0.0;
                scene.distances.at(r, c) = reg.d_near + t * (reg.d_far - reg.d_near);
                scene.features.set_pixel(r, c, draw_around(cat.mean, cat.stddev, rng));
            }
    }
    return scene;
}

SceneLayout shelf_layout(const SynthWorld& world, const std::string& manipulated, std::size_t height,
                         std::size_t width) {
    world.category(manipulated);
    SceneLayout layout;
    layout.manipulated = manipulated;
    constexpr std::size_t kShelves = 5;
    if (height < kShelves || width == 0) throw ConfigError("shelf scene needs at least 5 rows");
    const std::size_t band = height / kShelves;
    for (const auto& c : world.categories) {
        if (c.name == manipulated) continue;
        if (layout.regions.size() == kShelves) break;
        layout.regions.push_back({layout.regions.size() * band, 0, band, width, c.name, 0.1, 1.6});
    }
    if (layout.regions.size() < kShelves) throw ConfigError("shelf scene needs six categories in the world");
    return layout;
}

SceneLayout full_frame_layout(const std::string& manipulated, const std::string& category, std::size_t height,
                              std::size_t width, double distance) {
    return {manipulated, {{0, 0, height, width, category, distance, distance}}};
}

// ---- files ----------------------------------------------------------------

void write_world(std::ostream& out, const SynthWorld& world) {
    out << "BRWORLD 1\n";
    out << fmt::format("dim {}\nseed {}\ncategories {}\n", world.feature_dim, world.seed, world.categories.size());
    for (const auto& c : world.categories) out << fmt::format("{}|{}|{}\n", c.name, c.stddev, format_feature(c.mean));
    out << fmt::format("ratings {}\n", world.ratings.size());
    for (const auto& [pair, entry] : world.ratings.entries())
        out << fmt::format("{}|{}|{}\n", pair.first, pair.second, entry.rating);
}

SynthWorld parse_world(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || line != "BRWORLD 1") throw ParseError("not a synthetic world file", 1);
    SynthWorld world;
    world.feature_dim = to_uint(expect_key(in, "dim", line_no), line_no);
    world.seed = to_uint(expect_key(in, "seed", line_no), line_no);
    const auto n = to_uint(expect_key(in, "categories", line_no), line_no);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw ParseError("world file truncated in categories", line_no + 1);
        ++line_no;
        const auto parts = split(line, '|');
        if (parts.size() != 3 || parts[0].empty()) throw ParseError("expected name|stddev|values", line_no);
        world.categories.push_back(
            {parts[0], parse_feature(parts[2], world.feature_dim, line_no), to_double(parts[1], line_no)});
    }
    const auto m = to_uint(expect_key(in, "ratings", line_no), line_no);
    for (std::uint64_t i = 0; i < m; ++i) {
        if (!std::getline(in, line)) throw ParseError("world file truncated in ratings", line_no + 1);
        ++line_no;
        const auto parts = split(line, '|');
        if (parts.size() != 3) throw ParseError("expected a|b|rating", line_no);
        const auto r = to_uint(parts[2], line_no);
        if (r < 1 || r > 5) throw ParseError("rating outside 1..5", line_no);
        world.category(parts[0]), world.category(parts[1]);
        world.ratings.insert(parts[0], parts[1], static_cast<int>(r), kSynthReason);
    }
    return world;
}

void save_world(const SynthWorld& world, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    write_world(out, world);
}

SynthWorld load_world(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
    return parse_world(in);
}

SceneLayout parse_layout(std::istream& in) {
    SceneLayout layout;
    std::string line;
    std::size_t line_no = 0;
    bool have_manip = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto parts = split(line, '|');
        if (!have_manip) {
            if (parts.size() != 2 || parts[0] != "manipulated") throw ParseError("expected manipulated|name", line_no);
            layout.manipulated = parts[1];
            have_manip = true;
            continue;
        }
        if (parts.size() != 7) throw ParseError("expected row|col|rows|cols|d_near|d_far|category", line_no);
        layout.regions.push_back({to_uint(parts[0], line_no), to_uint(parts[1], line_no), to_uint(parts[2], line_no),
                                  to_uint(parts[3], line_no), parts[6], to_double(parts[4], line_no),
                                  to_double(parts[5], line_no)});
    }
    if (!have_manip) throw ParseError("layout names no manipulated category", line_no);
    return layout;
}

void write_layout(std::ostream& out, const SceneLayout& layout) {
    out << "manipulated|" << layout.manipulated << '\n';
    for (const auto& r : layout.regions)
        out << fmt::format("{}|{}|{}|{}|{}|{}|{}\n", r.row, r.col, r.rows, r.cols, r.d_near, r.d_far, r.category);
}

void write_category_samples(const std::map<std::string, std::vector<Feature>>& samples,
                            const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, feats] : samples) {
        const auto path = dir / (name + ".txt");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
        for (const auto& f : feats) out << format_feature(f) << '\n';
    }
}

std::map<std::string, std::vector<Feature>> read_category_samples(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError(fmt::format("no such sample directory: {}", dir.string()));
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::map<std::string, std::vector<Feature>> out;
    std::size_t dim = 0;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
        auto& feats = out[path.stem().string()];
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::istringstream count(line);
            std::size_t n = 0;
            for (std::string tok; count >> tok;) ++n;
            if (dim == 0) dim = n;
            try {
                feats.push_back(parse_feature(line, dim, line_no));
            } catch (const ParseError& e) {
                throw ParseError(fmt::format("{}: {}", path.filename().string(), e.what()));
            }
        }
    }
    if (out.empty()) throw DatasetError(fmt::format("no sample files in {}", dir.string()));
    return out;
}

}  // namespace bayesrisk
