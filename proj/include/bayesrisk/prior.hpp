#pragma once

// Semantic prior: object lookup table (per-category k-means centroids with
// nearest-centroid matching) and a symmetric pairwise risk table with 1-5
// ratings.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bayesrisk/core.hpp"
#include "bayesrisk/types.hpp"

namespace bayesrisk {

inline constexpr std::size_t kDefaultClusters = 5;

// ---- object LUT -----------------------------------------------------------

struct ObjectLut {
    std::size_t feature_dim = 0;
    std::size_t k = kDefaultClusters;
    std::map<std::string, std::vector<Feature>> entries;  // category -> k centroids

    bool empty() const { return entries.empty(); }
    void validate() const;  // SchemaError
};

struct KMeansOptions {
    std::size_t k = kDefaultClusters;
    std::size_t iterations = 100;
    std::size_t restarts = 10;
    std::uint64_t seed = 0;
};

// Lloyd iterations from k-means++ seeding, best within-cluster SSE over
// `restarts` seedings. An empty cluster is re-seeded with the point farthest
// from its current centroid. Needs samples.size() >= k.
std::vector<Feature> kmeans(const std::vector<Feature>& samples, std::size_t k, std::size_t iterations,
                            std::mt19937_64& rng, std::size_t restarts = 10);

double within_cluster_sse(const std::vector<Feature>& samples, const std::vector<Feature>& centroids);

struct ObjectLutBuild {
    ObjectLut lut;
    std::vector<std::string> warnings;
};

// Categories are processed in lexicographic order from one generator seeded
// once, so the result depends only on (samples, options). A category with
// fewer than k samples has its samples cycled up to k, with a warning.
ObjectLutBuild build_object_lut(const std::map<std::string, std::vector<Feature>>& samples,
                                const KMeansOptions& options = {});

struct CategoryMatch {
    std::string category;
    double distance = 0.0;
};

// Globally nearest centroid. Ties go to the lexicographically smaller category.
CategoryMatch match_category(const ObjectLut& lut, const Feature& feat);

// Same, but rejects matches farther than max_distance.
std::optional<CategoryMatch> match_category_within(const ObjectLut& lut, const Feature& feat, double max_distance);

// Text header (magic, categories, dim, k, one category name per line) followed
// by a little-endian float64 centroid block.
void save_object_lut(const ObjectLut& lut, const std::filesystem::path& path);
ObjectLut load_object_lut(const std::filesystem::path& path);

// ---- risk LUT -------------------------------------------------------------

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 5;

struct RiskEntry {
    int rating = kMaxRating;
    std::string reason;
    bool operator==(const RiskEntry&) const = default;
};

using CategoryPair = std::pair<std::string, std::string>;

// Ordered so that first <= second.
CategoryPair normalize_pair(const std::string& a, const std::string& b);

class RiskLut {
public:
    // Categories whose every interaction is rated safe.
    static std::set<std::string> default_tabletop_categories() { return {"table"}; }

    RiskLut() = default;

    // Stores the pair. A pair involving a tabletop category is stored as 5.
    // When the pair already exists the lower rating wins and a warning is
    // returned.
    std::optional<std::string> insert(const std::string& a, const std::string& b, int rating,
                                      const std::string& reason);

    RiskEntry lookup(const std::string& a, const std::string& b) const;
    bool contains(const std::string& a, const std::string& b) const;

    void set_default_rating(std::optional<int> rating);
    const std::optional<int>& default_rating() const { return default_rating_; }

    void set_tabletop_categories(std::set<std::string> categories) { tabletop_ = std::move(categories); }
    const std::set<std::string>& tabletop_categories() const { return tabletop_; }
    bool is_tabletop(const std::string& category) const { return tabletop_.count(category) > 0; }

    const std::map<CategoryPair, RiskEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<CategoryPair, RiskEntry> entries_;
    std::optional<int> default_rating_;
    std::set<std::string> tabletop_ = default_tabletop_categories();
};

inline constexpr const char* kTabletopReason = "tabletop";
inline constexpr const char* kUnratedReason = "unrated";

// (rating - 1) / 4.
SafeProbability rating_to_prob(int rating);

struct RiskTableIngest {
    RiskLut lut;
    std::vector<std::string> warnings;
};

// Lines `category_a|category_b|rating|reason`; blank lines and '#' comments
// are skipped. Malformed rows raise ParseError with the line number.
RiskTableIngest parse_risk_table(std::istream& in, const std::set<std::string>& tabletop =
                                                       RiskLut::default_tabletop_categories());
RiskTableIngest ingest_risk_table(const std::filesystem::path& path,
                                  const std::set<std::string>& tabletop = RiskLut::default_tabletop_categories());
void write_risk_table(std::ostream& out, const RiskLut& lut);

// ---- generation through a text-completion endpoint ------------------------

class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    // Throws TransportError when the endpoint cannot be used.
    virtual std::string complete(const std::string& prompt) = 0;
};

struct EndpointConfig {
    std::string url;                                  // http://host[:port]/path or https://...
    std::string token_env = "BAYESRISK_API_TOKEN";    // bearer token is read from here
    std::string model;                                // forwarded as "model" when non-empty
    double timeout_seconds = 60.0;
};

// POSTs {"prompt": ..., "model": ...} and reads the completion from "text",
// "completion" or choices[0].text / choices[0].message.content.
std::unique_ptr<CompletionClient> make_http_client(const EndpointConfig& config);

// Returns the recorded responses of {"responses": [...]} in order.
class ReplayClient : public CompletionClient {
public:
    explicit ReplayClient(std::vector<std::string> responses) : responses_(std::move(responses)) {}
    static ReplayClient from_file(const std::filesystem::path& path);
    std::string complete(const std::string& prompt) override;

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
};

inline const std::vector<std::string>& hazard_types() {
    static const std::vector<std::string> h{"spillage", "crushing", "fire hazard", "electrocution"};
    return h;
}

std::string render_prompt(const std::string& prompt_template, const std::vector<CategoryPair>& pairs);

struct ParsedRating {
    CategoryPair pair;  // as written in the response
    int rating = 0;
    std::string reason;
};

// Parses one `a|b|rating|reason` response line; nullopt when malformed.
std::optional<ParsedRating> parse_rating_line(const std::string& line);

struct GenerationOptions {
    std::size_t batch_size = 25;
    std::size_t max_retries = 3;
    std::set<std::string> tabletop = RiskLut::default_tabletop_categories();
};

struct TranscriptEntry {
    std::string prompt;
    std::string response;
};

struct SkippedPair {
    CategoryPair pair;
    std::string reason;
};

struct RiskGeneration {
    RiskLut lut;
    std::vector<TranscriptEntry> transcript;
    std::vector<SkippedPair> skipped;
    std::vector<std::string> warnings;
};

// Every unordered pair of distinct categories, in batches. Pairs missing or
// malformed in a response are asked again (up to max_retries more times) and
// then reported as skipped.
RiskGeneration generate_risk_table(CompletionClient& client, const std::vector<std::string>& categories,
                                   const std::string& prompt_template, const GenerationOptions& options = {});

}  // namespace bayesrisk
