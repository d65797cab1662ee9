#pragma once

// Synthetic world with known ground truth: Gaussian feature clusters per
// category, random pairwise ratings, demonstrations whose distances encode
// the ratings, and labelled scenes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bayesrisk/demos.hpp"
#include "bayesrisk/prior.hpp"
#include "bayesrisk/riskfield.hpp"

namespace bayesrisk {

struct SynthCategory {
    std::string name;
    Feature mean;
    double stddev = 0.0;
};

struct SynthWorld {
    std::size_t feature_dim = 0;
    std::uint64_t seed = 0;
    std::vector<SynthCategory> categories;
    RiskLut ratings;  // every distinct pair, symmetric, 1..5

    const SynthCategory& category(const std::string& name) const;
    int rating(const std::string& a, const std::string& b) const;
    // Smallest distance between two cluster means.
    double min_separation() const;
    double max_stddev() const;
};

inline constexpr double kSynthSeparation = 6.0;  // in units of max intra-cluster std

// Names come from the bundled category list (never "table"); means are drawn
// from N(0, I) and redrawn until every pair is at least 6 * stddev apart.
SynthWorld gen_world(std::size_t n_categories, std::size_t feature_dim, std::uint64_t seed, double stddev = 0.05);

// Mean safe distance for a pair rated r: 0.15 + 0.25 * (5 - r) meters.
double demo_distance_mean(int rating);
inline constexpr double kDemoDistanceStd = 0.05;

// n_traj_per_pair trajectories for every rated pair, frames_per_traj frames
// each. Distances ~ N(mean(r), 0.05) truncated at 0; features are drawn from
// the two clusters per frame. Trajectory ids are "1", "2", ... in pair order.
DemoLog gen_demos(const SynthWorld& world, std::size_t n_traj_per_pair, std::size_t frames_per_traj,
                  std::uint64_t seed);

// Draws from one truncated demo-distance distribution.
std::vector<double> sample_demo_distances(int rating, std::size_t n, std::uint64_t seed);

// Per-category feature samples, e.g. for building an object LUT.
std::map<std::string, std::vector<Feature>> gen_category_samples(const SynthWorld& world, std::size_t per_category,
                                                                 std::uint64_t seed);

// Rectangle filled with one category. Distance runs linearly from d_near at
// the left column to d_far at the right column.
struct SceneRegion {
    std::size_t row = 0, col = 0, rows = 0, cols = 0;
    std::string category;
    double d_near = 0.5, d_far = 0.5;
};

struct SceneLayout {
    std::string manipulated;
    std::vector<SceneRegion> regions;  // mask label = index + 1
};

struct SynthScene {
    FeatureImage features;
    DistanceImage distances;  // NaN outside every region
    MaskImage masks;
    Feature manip_feat;
    std::vector<int> region_ratings;  // ground truth rating of (manipulated, region) per label - 1
};

// ConfigError when regions overlap or leave the frame, LookupError for
// unknown categories.
SynthScene gen_scene(const SynthWorld& world, const SceneLayout& layout, std::size_t height, std::size_t width,
                     std::uint64_t seed);

// Five horizontal bands stacked top to bottom, one per non-manipulated
// category in world order, each spanning the same 0.1 .. 1.6 m distance ramp.
SceneLayout shelf_layout(const SynthWorld& world, const std::string& manipulated, std::size_t height,
                         std::size_t width);
// One region covering the whole frame.
SceneLayout full_frame_layout(const std::string& manipulated, const std::string& category, std::size_t height,
                              std::size_t width, double distance);

// Text formats.
//   world:  "BRWORLD 1", "dim D", "seed S", "categories N", then N lines
//           `name|stddev|v_0 .. v_{D-1}`, "ratings M", then M lines `a|b|r`.
//   layout: "manipulated|name" followed by `row|col|rows|cols|d_near|d_far|category`.
void write_world(std::ostream& out, const SynthWorld& world);
SynthWorld parse_world(std::istream& in);
void save_world(const SynthWorld& world, const std::filesystem::path& path);
SynthWorld load_world(const std::filesystem::path& path);
SceneLayout parse_layout(std::istream& in);
void write_layout(std::ostream& out, const SceneLayout& layout);

// One `<category>.txt` per category with one feature per line.
void write_category_samples(const std::map<std::string, std::vector<Feature>>& samples,
                            const std::filesystem::path& dir);
std::map<std::string, std::vector<Feature>> read_category_samples(const std::filesystem::path& dir);

}  // namespace bayesrisk
