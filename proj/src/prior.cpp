#include "bayesrisk/prior.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "bayesrisk/assets.hpp"
#include "bayesrisk/errors.hpp"
#include "binary_io.hpp"

namespace bayesrisk {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

double squared_distance(const Feature& a, const Feature& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double d = a(i) - b(i);
        s += d * d;
    }
    return s;
}

std::size_t nearest(const std::vector<Feature>& centroids, const Feature& x, double* best_d2 = nullptr) {
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d2 = squared_distance(centroids[c], x);
        if (d2 < best_val) best_val = d2, best = c;
    }
    if (best_d2) *best_d2 = best_val;
    return best;
}

std::vector<Feature> seed_plus_plus(const std::vector<Feature>& samples, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = samples.size();
    std::vector<Feature> centroids;
    centroids.push_back(samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(samples[i], centroids[0]);
    while (centroids.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        } else {
            const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(samples[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(samples[i], centroids.back()));
    }
    return centroids;
}

}  // namespace

std::vector<std::string> bundled_categories() {
    std::vector<std::string> out;
    std::istringstream in{std::string(bundled_categories_text())};
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

// ---- object LUT -----------------------------------------------------------

void ObjectLut::validate() const {
    if (k == 0) throw SchemaError("object LUT: k must be positive");
    for (const auto& [cat, cents] : entries) {
        if (cents.size() != k) throw SchemaError(fmt::format("object LUT: '{}' has {} centroids, expected {}", cat, cents.size(), k));
        for (const auto& c : cents) {
            if (static_cast<std::size_t>(c.size()) != feature_dim)
                throw SchemaError(fmt::format("object LUT: '{}' centroid has dimension {}", cat, c.size()));
            if (!c.allFinite()) throw SchemaError(fmt::format("object LUT: '{}' has a non-finite centroid", cat));
        }
    }
}

namespace {

std::vector<Feature> lloyd(const std::vector<Feature>& samples, std::size_t k, std::size_t iterations,
                           std::mt19937_64& rng) {
    const std::size_t n = samples.size();
    const Eigen::Index dim = samples[0].size();

    std::vector<Feature> centroids = seed_plus_plus(samples, k, rng);
    std::vector<std::size_t> assign(n, k);
    std::vector<double> d2(n);
    for (std::size_t it = 0; it < iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest(centroids, samples[i], &d2[i]);
            if (c != assign[i]) assign[i] = c, changed = true;
        }
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t a : assign) ++counts[a];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            // Farthest point that can be spared by its cluster.
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assign[i]] > 1 && (far == n || d2[i] > d2[far])) far = i;
            }
            if (far == n) break;  // cannot happen with n >= k
            --counts[assign[far]];
            assign[far] = c;
            counts[c] = 1;
            d2[far] = 0.0;
            changed = true;
        }
        std::vector<Feature> sums(k, Feature::Zero(dim));
        for (std::size_t i = 0; i < n; ++i) sums[assign[i]] += samples[i];
        for (std::size_t c = 0; c < k; ++c) centroids[c] = sums[c] / static_cast<double>(counts[c]);
        if (!changed) break;
    }
    return centroids;
}

}  // namespace

std::vector<Feature> kmeans(const std::vector<Feature>& samples, std::size_t k, std::size_t iterations,
                            std::mt19937_64& rng, std::size_t restarts) {
    if (k == 0) throw ContractViolation("kmeans: k must be positive");
    if (samples.size() < k) throw ContractViolation(fmt::format("kmeans: {} samples for k = {}", samples.size(), k));
    std::vector<Feature> best;
    double best_sse = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
        auto centroids = lloyd(samples, k, iterations, rng);
        const double sse = within_cluster_sse(samples, centroids);
        if (best.empty() || sse < best_sse) best = std::move(centroids), best_sse = sse;
    }
    return best;
}

double within_cluster_sse(const std::vector<Feature>& samples, const std::vector<Feature>& centroids) {
    double sse = 0.0;
    for (const auto& x : samples) {
        double d2 = 0.0;
        nearest(centroids, x, &d2);
        sse += d2;
    }
    return sse;
}

ObjectLutBuild build_object_lut(const std::map<std::string, std::vector<Feature>>& samples,
                                const KMeansOptions& options) {
    if (options.k == 0) throw ConfigError("object LUT: k must be positive");
    ObjectLutBuild result;
    result.lut.k = options.k;
    std::mt19937_64 rng(options.seed);
    bool have_dim = false;
    for (const auto& [cat, feats] : samples) {
        if (feats.empty()) throw DatasetError(fmt::format("object LUT: category '{}' has no samples", cat));
        if (cat.empty() || cat.find('\n') != std::string::npos)
            throw DatasetError("object LUT: category names must be non-empty single lines");
        for (const auto& f : feats) {
            if (!have_dim) result.lut.feature_dim = static_cast<std::size_t>(f.size()), have_dim = true;
            if (static_cast<std::size_t>(f.size()) != result.lut.feature_dim)
                throw SchemaError(fmt::format("object LUT: '{}' has a feature of dimension {}, expected {}", cat, f.size(),
                                              result.lut.feature_dim));
            if (!f.allFinite()) throw DatasetError(fmt::format("object LUT: '{}' has a non-finite feature", cat));
        }
        std::vector<Feature> pool = feats;
        if (pool.size() < options.k) {
            result.warnings.push_back(fmt::format("category '{}' has {} samples for k = {}; duplicating samples", cat,
                                                  feats.size(), options.k));
            for (std::size_t i = 0; pool.size() < options.k; ++i) pool.push_back(feats[i % feats.size()]);
        }
        result.lut.entries[cat] = kmeans(pool, options.k, options.iterations, rng, options.restarts);
    }
    return result;
}

CategoryMatch match_category(const ObjectLut& lut, const Feature& feat) {
    if (lut.empty()) throw LookupError("object LUT is empty");
    if (static_cast<std::size_t>(feat.size()) != lut.feature_dim)
        throw SchemaError(fmt::format("query dimension {} does not match object LUT dimension {}", feat.size(), lut.feature_dim));
    const std::string* best = nullptr;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const auto& [cat, cents] : lut.entries) {  // lexicographic; strict < keeps the first on ties
        for (const auto& c : cents) {
            const double d2 = squared_distance(c, feat);
            if (d2 < best_d2) best_d2 = d2, best = &cat;
        }
    }
    if (!best) throw LookupError("object LUT query is not comparable (non-finite feature?)");
    return {*best, std::sqrt(best_d2)};
}

std::optional<CategoryMatch> match_category_within(const ObjectLut& lut, const Feature& feat, double max_distance) {
    auto m = match_category(lut, feat);
    if (m.distance > max_distance) return std::nullopt;
    return m;
}

namespace {
constexpr const char* kLutMagic = "BROBJLUT 1";
}

void save_object_lut(const ObjectLut& lut, const std::filesystem::path& path) {
    lut.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write object LUT " + path.string());
    out << kLutMagic << '\n'
        << "dim " << lut.feature_dim << '\n'
        << "k " << lut.k << '\n'
        << "categories " << lut.entries.size() << '\n';
    for (const auto& [cat, cents] : lut.entries) out << cat << '\n';
    out << "centroids\n";
    for (const auto& [cat, cents] : lut.entries)
        for (const auto& c : cents)
            for (Eigen::Index i = 0; i < c.size(); ++i) detail::put<double>(out, c(i));
    if (!out) throw IoError("failed writing object LUT " + path.string());
}

ObjectLut load_object_lut(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open object LUT " + path.string());
    std::string line;
    std::size_t line_no = 0;
    const auto next_line = [&]() -> std::string {
        if (!std::getline(in, line)) throw ParseError("object LUT header truncated", line_no + 1);
        ++line_no;
        return line;
    };
    const auto header_value = [&](const std::string& key) -> std::size_t {
        const std::string l = next_line();
        std::size_t value = 0;
        const std::string prefix = key + " ";
        if (l.rfind(prefix, 0) != 0) throw ParseError("object LUT: expected '" + key + "'", line_no);
        const char* b = l.data() + prefix.size();
        const char* e = l.data() + l.size();
        const auto [ptr, ec] = std::from_chars(b, e, value);
        if (ec != std::errc() || ptr != e) throw ParseError("object LUT: bad value for '" + key + "'", line_no);
        return value;
    };
    if (next_line() != kLutMagic) throw ParseError("not an object LUT file", 1);
    ObjectLut lut;
    lut.feature_dim = header_value("dim");
    lut.k = header_value("k");
    const std::size_t n = header_value("categories");
    if (lut.feature_dim > (1u << 20) || lut.k > (1u << 16) || n > (1u << 24))
        throw SchemaError("object LUT header has implausible sizes");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back(next_line());
    if (next_line() != "centroids") throw ParseError("object LUT: expected 'centroids'", line_no);
    for (const auto& name : names) {
        if (lut.entries.count(name)) throw SchemaError("object LUT: duplicate category '" + name + "'");
        std::vector<Feature> cents(lut.k, Feature(static_cast<Eigen::Index>(lut.feature_dim)));
        for (auto& c : cents)
            for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = detail::get<double>(in, "object LUT centroid block");
        lut.entries.emplace(name, std::move(cents));
    }
    if (!detail::at_eof(in)) throw ParseError("object LUT: trailing bytes after centroid block");
    lut.validate();
    return lut;
}

// ---- risk LUT -------------------------------------------------------------

CategoryPair normalize_pair(const std::string& a, const std::string& b) {
    return a <= b ? CategoryPair{a, b} : CategoryPair{b, a};
}

std::optional<std::string> RiskLut::insert(const std::string& a, const std::string& b, int rating,
                                           const std::string& reason) {
    if (rating < kMinRating || rating > kMaxRating) throw DomainError(fmt::format("rating {} outside 1..5", rating));
    RiskEntry entry{rating, reason};
    if (is_tabletop(a) || is_tabletop(b)) entry = {kMaxRating, kTabletopReason};
    const auto key = normalize_pair(a, b);
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        entries_.emplace(key, std::move(entry));
        return std::nullopt;
    }
    if (it->second.rating == entry.rating) return std::nullopt;
    auto warning = fmt::format("pair ({}, {}) rated both {} and {}; keeping {}", key.first, key.second,
                               it->second.rating, entry.rating, std::min(it->second.rating, entry.rating));
    if (entry.rating < it->second.rating) it->second = std::move(entry);
    return warning;
}

bool RiskLut::contains(const std::string& a, const std::string& b) const {
    return entries_.count(normalize_pair(a, b)) > 0;
}

RiskEntry RiskLut::lookup(const std::string& a, const std::string& b) const {
    const auto it = entries_.find(normalize_pair(a, b));
    if (it != entries_.end()) return it->second;
    if (is_tabletop(a) || is_tabletop(b)) return {kMaxRating, kTabletopReason};
    if (default_rating_) return {*default_rating_, kUnratedReason};
    throw LookupError(fmt::format("no risk rating for pair ({}, {})", a, b));
}

void RiskLut::set_default_rating(std::optional<int> rating) {
    if (rating && (*rating < kMinRating || *rating > kMaxRating))
        throw ConfigError(fmt::format("default rating {} outside 1..5", *rating));
    default_rating_ = rating;
}

SafeProbability rating_to_prob(int rating) {
    if (rating < kMinRating || rating > kMaxRating) throw DomainError(fmt::format("rating {} outside 1..5", rating));
    return SafeProbability((rating - 1) / 4.0);
}

namespace {

std::vector<std::string> split_fields(std::string_view line, std::size_t max_fields) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (out.size() + 1 < max_fields) {
        const auto bar = line.find('|', start);
        if (bar == std::string_view::npos) break;
        out.push_back(trim(line.substr(start, bar - start)));
        start = bar + 1;
    }
    out.push_back(trim(line.substr(start)));
    return out;
}

std::optional<int> parse_rating(const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < kMinRating || v > kMaxRating) return std::nullopt;
    return v;
}

}  // namespace

RiskTableIngest parse_risk_table(std::istream& in, const std::set<std::string>& tabletop) {
    RiskTableIngest result;
    result.lut.set_tabletop_categories(tabletop);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = split_fields(t, 4);
        if (fields.size() != 4) throw ParseError("risk table: expected a|b|rating|reason", line_no);
        if (fields[0].empty() || fields[1].empty()) throw ParseError("risk table: empty category", line_no);
        const auto rating = parse_rating(fields[2]);
        if (!rating) throw ParseError("risk table: rating must be an integer 1..5", line_no);
        if (auto w = result.lut.insert(fields[0], fields[1], *rating, fields[3]))
            result.warnings.push_back(fmt::format("line {}: {}", line_no, *w));
    }
    return result;
}

RiskTableIngest ingest_risk_table(const std::filesystem::path& path, const std::set<std::string>& tabletop) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open risk table " + path.string());
    return parse_risk_table(in, tabletop);
}

void write_risk_table(std::ostream& out, const RiskLut& lut) {
    for (const auto& [pair, entry] : lut.entries())
        out << pair.first << '|' << pair.second << '|' << entry.rating << '|' << entry.reason << '\n';
}

// ---- generation -----------------------------------------------------------

ReplayClient ReplayClient::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open replay file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("replay file: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("responses") || !doc["responses"].is_array())
        throw SchemaError("replay file: expected {\"responses\": [...]}");
    std::vector<std::string> responses;
    for (const auto& r : doc["responses"]) {
        if (!r.is_string()) throw SchemaError("replay file: responses must be strings");
        responses.push_back(r.get<std::string>());
    }
    return ReplayClient(std::move(responses));
}

std::string ReplayClient::complete(const std::string&) {
    if (next_ >= responses_.size()) throw TransportError("replay file has no more recorded responses");
    return responses_[next_++];
}

std::string render_prompt(const std::string& prompt_template, const std::vector<CategoryPair>& pairs) {
    std::string hazards;
    for (const auto& h : hazard_types()) hazards += (hazards.empty() ? "\"" : ", \"") + h + "\"";
    std::string pair_lines;
    for (const auto& [a, b] : pairs) pair_lines += a + "|" + b + "\n";
    std::string out = prompt_template;
    const auto replace_all = [&out](const std::string& key, const std::string& value) {
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
            out.replace(pos, key.size(), value);
    };
    replace_all("{{hazards}}", hazards);
    replace_all("{{pairs}}", pair_lines);
    return out;
}

std::optional<ParsedRating> parse_rating_line(const std::string& line) {
    const auto fields = split_fields(line, 4);
    if (fields.size() != 4 || fields[0].empty() || fields[1].empty() || fields[3].empty()) return std::nullopt;
    const auto rating = parse_rating(fields[2]);
    if (!rating) return std::nullopt;
    return ParsedRating{{fields[0], fields[1]}, *rating, fields[3]};
}

RiskGeneration generate_risk_table(CompletionClient& client, const std::vector<std::string>& categories,
                                   const std::string& prompt_template, const GenerationOptions& options) {
    if (options.batch_size == 0) throw ConfigError("generation batch size must be positive");
    RiskGeneration result;
    result.lut.set_tabletop_categories(options.tabletop);

    std::vector<std::string> cats;
    for (const auto& c : categories) {
        if (std::find(cats.begin(), cats.end(), c) == cats.end()) cats.push_back(c);
    }
    std::vector<CategoryPair> pairs;
    for (std::size_t i = 0; i < cats.size(); ++i)
        for (std::size_t j = i + 1; j < cats.size(); ++j) pairs.emplace_back(cats[i], cats[j]);

    for (std::size_t start = 0; start < pairs.size(); start += options.batch_size) {
        std::vector<CategoryPair> pending(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                                          pairs.begin() + static_cast<std::ptrdiff_t>(
                                                              std::min(pairs.size(), start + options.batch_size)));
        std::map<CategoryPair, std::string> last_problem;
        for (std::size_t attempt = 0; attempt <= options.max_retries && !pending.empty(); ++attempt) {
            const std::string prompt = render_prompt(prompt_template, pending);
            const std::string response = client.complete(prompt);
            result.transcript.push_back({prompt, response});

            std::istringstream lines(response);
            std::string line;
            while (std::getline(lines, line)) {
                if (trim(line).empty()) continue;
                const auto parsed = parse_rating_line(line);
                if (!parsed) {
                    // Attribute the malformed line to a pending pair when its first two fields name one.
                    const auto f = split_fields(line, 4);
                    if (f.size() >= 2) last_problem[normalize_pair(f[0], f[1])] = "malformed line: " + trim(line);
                    continue;
                }
                const auto key = normalize_pair(parsed->pair.first, parsed->pair.second);
                const auto it = std::find_if(pending.begin(), pending.end(),
                                             [&](const CategoryPair& p) { return normalize_pair(p.first, p.second) == key; });
                if (it == pending.end()) {
                    result.warnings.push_back(fmt::format("ignored rating for unrequested pair ({}, {})", key.first, key.second));
                    continue;
                }
                if (auto w = result.lut.insert(key.first, key.second, parsed->rating, parsed->reason))
                    result.warnings.push_back(*w);
                pending.erase(it);
            }
        }
        for (const auto& p : pending) {
            const auto it = last_problem.find(normalize_pair(p.first, p.second));
            result.skipped.push_back(
                {p, it != last_problem.end() ? it->second
                                             : fmt::format("no rating after {} attempts", options.max_retries + 1)});
        }
    }
    return result;
}

}  // namespace bayesrisk
