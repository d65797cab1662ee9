#include "bayesrisk/cli.hpp"

#include <glob.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "bayesrisk/assets.hpp"
#include "bayesrisk/errors.hpp"
#include "bayesrisk/likelihood.hpp"
#include "bayesrisk/planner.hpp"
#include "bayesrisk/prior.hpp"
#include "bayesrisk/riskfield.hpp"
#include "bayesrisk/synth.hpp"
#include "bayesrisk/valuation.hpp"

namespace bayesrisk {

namespace {

// ---- settings -------------------------------------------------------------

struct Globals {
    double lambda = 0.5;
    double d_max = kDefaultDMax;
    double alpha = 0.1;
    double percentile = 75.0;
    std::size_t k = kDefaultClusters;
    std::uint64_t seed = 0;
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    std::string endpoint_url;
    std::string endpoint_model;
    std::string token_env = "BAYESRISK_API_TOKEN";
    double timeout = 60.0;

    AttenuationConfig attenuation() const {
        AttenuationConfig a;
        a.lambda = lambda;
        a.validate();
        return a;
    }
    CameraIntrinsics intrinsics() const { return {fx, fy, cx, cy}; }
};

// Inputs shared by every command that evaluates the posterior.
struct PosteriorInputs {
    std::string model, object_lut, risk_lut, manip, manip_feature;
    std::vector<std::string> tabletop{"table"};
    std::optional<int> default_rating;

    void add_to(CLI::App* cmd, bool required) {
        cmd->add_option("--model", model, "Likelihood model file")->required(required);
        cmd->add_option("--object-lut", object_lut, "Object LUT file")->required(required);
        cmd->add_option("--risk-lut", risk_lut, "Risk table file (a|b|rating|reason)")->required(required);
        cmd->add_option("--manip", manip, "Manipulated object category")->required(required);
        cmd->add_option("--manip-feature", manip_feature, "Text file with the manipulated object's feature")
            ->required(required);
        cmd->add_option("--tabletop", tabletop, "Categories treated as always safe")->capture_default_str();
        cmd->add_option("--default-rating", default_rating, "Rating used for pairs missing from the risk table");
    }
};

struct Loaded {
    LikelihoodModel model;
    ObjectLut object_lut;
    RiskLut risk_lut;
    Feature manip_feat;
};

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) throw IoError(fmt::format("{} not found: {}", what, path));
}

Feature read_feature_file(const std::string& path) {
    require_file(path, "feature file");
    std::ifstream in(path);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) {
        double x = 0.0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
        if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(x))
            throw ParseError(fmt::format("{}: bad feature value '{}'", path, tok));
        v.push_back(x);
    }
    if (v.empty()) throw ParseError(fmt::format("{}: empty feature file", path));
    return Eigen::Map<const Feature>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_feature_file(const Feature& f, const std::filesystem::path& path) {
    std::ofstream out(path);
    for (Eigen::Index i = 0; i < f.size(); ++i) out << (i ? " " : "") << fmt::format("{}", f(i));
    out << '\n';
}

RiskLut load_risk_lut(const PosteriorInputs& in) {
    require_file(in.risk_lut, "risk table");
    const std::set<std::string> tabletop(in.tabletop.begin(), in.tabletop.end());
    RiskLut lut = ingest_risk_table(in.risk_lut, tabletop).lut;
    lut.set_default_rating(in.default_rating);
    return lut;
}

Loaded load_posterior_inputs(const PosteriorInputs& in) {
    require_file(in.model, "model");
    require_file(in.object_lut, "object LUT");
    Loaded l;
    l.object_lut = load_object_lut(in.object_lut);
    l.model = load_model(in.model, l.object_lut.feature_dim);
    l.risk_lut = load_risk_lut(in);
    l.manip_feat = read_feature_file(in.manip_feature);
    if (static_cast<std::size_t>(l.manip_feat.size()) != l.model.shape().feature_dim)
        throw SchemaError(fmt::format("manipulated feature has {} values, model expects {}", l.manip_feat.size(),
                                      l.model.shape().feature_dim));
    return l;
}

Point3 parse_point(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        double x = 0.0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), x);
        if (ec != std::errc() || ptr != part.data() + part.size()) throw ConfigError(fmt::format("bad point '{}'", text));
        v.push_back(x);
    }
    if (v.size() != 3) throw ConfigError(fmt::format("point '{}' needs three comma-separated values", text));
    return {v[0], v[1], v[2]};
}

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

std::ofstream open_out(const std::filesystem::path& path) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    return out;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> out;
    if (rc == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    ::globfree(&g);
    std::sort(out.begin(), out.end());
    return out;
}

std::string fmt6(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : fmt::format("{}", v); }

// ---- commands -------------------------------------------------------------

struct BuildObjectLutCmd {
    std::string samples, out;
    std::size_t iterations = 100, restarts = 10;

    void run(const Globals& g, std::ostream& log, std::ostream& err) const {
        if (!std::filesystem::is_directory(samples)) throw IoError(fmt::format("sample directory not found: {}", samples));
        KMeansOptions opts;
        opts.k = g.k;
        opts.iterations = iterations;
        opts.restarts = restarts;
        opts.seed = g.seed;
        const auto built = build_object_lut(read_category_samples(samples), opts);
        for (const auto& w : built.warnings) err << "warning: " << w << '\n';
        ensure_parent(out);
        save_object_lut(built.lut, out);
        log << fmt::format("object LUT: {} categories, k = {}, dim = {} -> {}\n", built.lut.entries.size(), built.lut.k,
                           built.lut.feature_dim, out);
    }
};

std::vector<std::string> read_category_list(const std::string& path) {
    require_file(path, "category list");
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

struct BuildRiskLutCmd {
    std::string out, table, replay, categories, world, prompt, transcript, skipped;
    bool endpoint = false;
    std::size_t batch_size = 25, retries = 3;
    std::vector<std::string> tabletop{"table"};

    void run(const Globals& g, std::ostream& log, std::ostream& err) const {
        const std::set<std::string> tt(tabletop.begin(), tabletop.end());
        const int sources = !table.empty() + !replay.empty() + endpoint;
        if (sources != 1) throw ConfigError("choose exactly one of --table, --replay, --endpoint");
        RiskLut lut;
        if (!table.empty()) {
            require_file(table, "risk table");
            auto ingest = ingest_risk_table(table, tt);
            for (const auto& w : ingest.warnings) err << "warning: " << w << '\n';
            lut = std::move(ingest.lut);
        } else {
            std::vector<std::string> names;
            if (!categories.empty()) {
                names = read_category_list(categories);
            } else if (!world.empty()) {
                require_file(world, "world file");
                for (const auto& c : load_world(world).categories) names.push_back(c.name);
            } else {
                names = bundled_categories();
            }
            std::string tmpl(bundled_prompt_template());
            if (!prompt.empty()) {
                require_file(prompt, "prompt template");
                std::ifstream in(prompt);
                tmpl.assign(std::istreambuf_iterator<char>(in), {});
            }
            std::unique_ptr<CompletionClient> client;
            if (endpoint) {
                if (g.endpoint_url.empty()) throw ConfigError("--endpoint needs --endpoint-url (or endpoint_url in the config)");
                client = make_http_client({g.endpoint_url, g.token_env, g.endpoint_model, g.timeout});
            } else {
                require_file(replay, "replay file");
                client = std::make_unique<ReplayClient>(ReplayClient::from_file(replay));
            }
            GenerationOptions opts;
            opts.batch_size = batch_size;
            opts.max_retries = retries;
            opts.tabletop = tt;
            auto gen = generate_risk_table(*client, names, tmpl, opts);
            for (const auto& w : gen.warnings) err << "warning: " << w << '\n';
            if (!transcript.empty()) {
                nlohmann::json j = nlohmann::json::array();
                for (const auto& t : gen.transcript) j.push_back({{"prompt", t.prompt}, {"response", t.response}});
                open_out(transcript) << j.dump(2) << '\n';
            }
            if (!skipped.empty()) {
                auto s = open_out(skipped);
                for (const auto& p : gen.skipped) s << p.pair.first << '|' << p.pair.second << '|' << p.reason << '\n';
            }
            if (!gen.skipped.empty()) err << fmt::format("warning: {} pairs skipped\n", gen.skipped.size());
            lut = std::move(gen.lut);
        }
        auto o = open_out(out);
        write_risk_table(o, lut);
        log << fmt::format("risk LUT: {} pairs -> {}\n", lut.size(), out);
    }
};

struct TrainCmd {
    std::string demos, out, history;
    std::size_t width = 64, layers = 2, epochs = 20, batch = 32, pairs_per_traj = 100;
    double lr = 0.01, momentum = 0.9;

    void run(const Globals& g, std::ostream& log, std::ostream& err) const {
        require_file(demos, "demo log");
        const auto demo_log = read_demo_log(demos);
        TrainingSetOptions ts_opts;
        ts_opts.pairs_per_traj = pairs_per_traj;
        ts_opts.seed = g.seed;
        ts_opts.d_max = g.d_max;
        const auto set = make_training_set(group_trajectories(demo_log.records), ts_opts);
        for (const auto& w : set.warnings) err << "warning: " << w << '\n';
        if (set.examples.empty()) throw DatasetError(fmt::format("no training examples in {}", demos));
        auto model = LikelihoodModel::init(demo_log.dim, width, layers, g.seed, g.d_max);
        TrainingConfig cfg;
        cfg.learning_rate = lr;
        cfg.momentum = momentum;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.seed = g.seed;
        const auto hist = train(model, set.examples, cfg);
        ensure_parent(out);
        save_model(model, out);
        auto h = open_out(history.empty() ? out + ".loss.csv" : history);
        h << "epoch,loss\n";
        for (std::size_t i = 0; i < hist.size(); ++i) h << fmt::format("{},{:.9g}\n", i, hist[i]);
        log << fmt::format("trained on {} examples: loss {:.6g} -> {:.6g} -> {}\n", set.examples.size(), hist.front(),
                           hist.back(), out);
    }
};

struct EvalCmd {
    PosteriorInputs post;
    std::string features, distances, masks, out_prefix;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        const auto in = load_posterior_inputs(post);
        require_file(features, "feature image");
        require_file(distances, "distance image");
        const auto feats = read_feature_image(features);
        const auto dist = read_distance_image(distances);
        if (feats.dim != in.model.shape().feature_dim)
            throw SchemaError(fmt::format("feature image has dimension {}, model expects {}", feats.dim,
                                          in.model.shape().feature_dim));
        ensure_parent(out_prefix);
        RiskImageStats stats;
        const auto risk = risk_image(in.model, in.object_lut, in.risk_lut, post.manip, in.manip_feat, feats, dist,
                                     g.attenuation(), &stats);
        write_risk_image(risk, out_prefix + ".rimg");
        render_turbo(risk, out_prefix + ".ppm");
        log << fmt::format("{} valid pixels, {} distinct contexts -> {}.rimg\n", stats.valid_pixels,
                           stats.distinct_contexts, out_prefix);
        if (masks.empty()) return;
        require_file(masks, "mask image");
        const auto m = read_mask_image(masks);
        if (m.height != risk.height || m.width != risk.width) throw SchemaError("mask image size differs from the scene");
        write_risk_image(average_over_masks(risk, m), out_prefix + "_masked.rimg");
        std::map<std::uint16_t, std::pair<double, std::size_t>> acc;
        for (std::size_t i = 0; i < risk.data.size(); ++i) {
            if (m.labels[i] == 0 || !risk.valid(i)) continue;
            auto& a = acc[m.labels[i]];
            a.first += risk.data[i];
            ++a.second;
        }
        auto table = open_out(out_prefix + "_objects.csv");
        table << "label,valid_pixels,mean_risk\n";
        for (const auto& [label, a] : acc)
            table << fmt::format("{},{},{}\n", label, a.second, fmt6(a.first / static_cast<double>(a.second)));
    }
};

struct ScoreCmd {
    std::vector<std::string> trajectories;  // ID=GLOB
    std::size_t window = 0;
    std::string out, frames_out;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        std::vector<TrajectoryScore> scores;
        std::vector<std::pair<std::string, FrameScore>> frames;
        for (const auto& spec : trajectories) {
            const auto eq = spec.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError(fmt::format("expected ID=GLOB, got '{}'", spec));
            const std::string id = spec.substr(0, eq);
            auto files = expand_glob(spec.substr(eq + 1));
            if (files.empty()) throw ScoringError(fmt::format("no frames match '{}'", spec.substr(eq + 1)));
            // first and last `window` frames
            std::vector<std::size_t> picked;
            for (std::size_t i = 0; i < files.size(); ++i)
                if (window == 0 || i < window || i + window >= files.size()) picked.push_back(i);
            std::vector<FrameScore> fs;
            for (auto i : picked) {
                fs.push_back(frame_percentile(read_risk_image(files[i]), g.percentile, i));
                frames.emplace_back(id, fs.back());
            }
            scores.push_back(trajectory_score(id, fs));
        }
        auto o = open_out(out);
        write_score_report(o, scores);
        if (!frames_out.empty()) {
            auto f = open_out(frames_out);
            f << "traj_id,frame,value,valid_pixels\n";
            for (const auto& [id, s] : frames) f << fmt::format("{},{},{},{}\n", id, s.frame, fmt6(s.value), s.valid_pixels);
        }
        for (const auto& s : scores) log << fmt::format("{}: {} frames, mean p{} = {}\n", s.traj_id, s.frames, g.percentile, fmt6(s.mean));
    }
};

std::vector<TrajectoryScore> read_score_report(const std::string& path) {
    require_file(path, "score report");
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line) || line != "traj_id,frames,mean_p75") throw ParseError(path + ": missing score header", 1);
    std::vector<TrajectoryScore> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto a = line.find(','), b = line.rfind(',');
        if (a == std::string::npos || a == b) throw ParseError(path + ": expected traj_id,frames,mean", line_no);
        TrajectoryScore s;
        s.traj_id = line.substr(0, a);
        const std::string frames = line.substr(a + 1, b - a - 1), mean = line.substr(b + 1);
        const auto r1 = std::from_chars(frames.data(), frames.data() + frames.size(), s.frames);
        const auto r2 = std::from_chars(mean.data(), mean.data() + mean.size(), s.mean);
        if (r1.ec != std::errc() || r2.ec != std::errc() || r2.ptr != mean.data() + mean.size())
            throw ParseError(path + ": bad score row", line_no);
        out.push_back(s);
    }
    if (out.empty()) throw ScoringError(path + ": no trajectories to rank");
    return out;
}

struct RankCmd {
    std::string scores, out;

    void run(const Globals&, std::ostream& log, std::ostream&) const {
        const auto r = rank_trajectories(read_score_report(scores));
        std::string text = "order:";
        for (const auto& id : r.order) text += " " + id;
        text += fmt::format("\nleast: {}\nmost: {}\n", r.least_risky, r.most_risky);
        log << text;
        if (!out.empty()) open_out(out) << text;
    }
};

struct RadiusCmd {
    PosteriorInputs post;
    std::string scene_feature;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        const auto in = load_posterior_inputs(post);
        const auto f = read_feature_file(scene_feature);
        const auto curve =
            posterior_curve(in.model, in.object_lut, in.risk_lut, post.manip, in.manip_feat, f, g.attenuation());
        log << fmt::format("context {} | {} rating {} ({}) radius {}\n", post.manip, curve.context().matched,
                           curve.context().rating.rating, curve.context().rating.reason,
                           fmt6(extract_radius(curve, g.alpha)));
    }
};

struct PlanCmd {
    PosteriorInputs post;
    std::string depth, features, obstacles, start, goal, out, obstacles_out, report;
    std::string bounds_min = "-1,-1,-1", bounds_max = "1,1,1";
    double resolution = 0.02, voxel = 0.02;
    std::size_t smoothing = 3;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        std::vector<BallObstacle> balls;
        if (!obstacles.empty()) {
            require_file(obstacles, "obstacle file");
            std::ifstream in(obstacles);
            balls = parse_obstacles(in);
        } else {
            if (depth.empty() || features.empty()) throw ConfigError("plan needs --obstacles or --depth with --features");
            const auto in = load_posterior_inputs(post);
            require_file(depth, "depth image");
            require_file(features, "feature image");
            SceneObstacleOptions opts;
            opts.alpha = g.alpha;
            opts.voxel = voxel;
            opts.attenuation = g.attenuation();
            balls = scene_obstacles(in.model, in.object_lut, in.risk_lut, post.manip, in.manip_feat,
                                    read_feature_image(features), read_distance_image(depth), g.intrinsics(), opts);
        }
        if (!obstacles_out.empty()) {
            auto o = open_out(obstacles_out);
            write_obstacles(o, balls);
        }
        PlannerConfig cfg;
        cfg.resolution = resolution;
        cfg.bounds_min = parse_point(bounds_min);
        cfg.bounds_max = parse_point(bounds_max);
        cfg.smoothing_iterations = smoothing;
        const auto path = plan(parse_point(start), parse_point(goal), balls, cfg);
        auto o = open_out(out);
        write_path(o, path);
        const std::string text = fmt::format("waypoints {}\nlength {}\nclearance {}\nobstacles {}\n",
                                             path.waypoints.size(), fmt6(path.length()),
                                             fmt6(path_clearance(path, balls)), balls.size());
        open_out(report.empty() ? out + ".report" : report) << text;
        log << text;
    }
};

struct SynthWorldCmd {
    std::size_t categories = 5, dim = 32, samples_per_category = 200;
    double stddev = 0.05;
    std::string out, samples_dir, risk_table;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        const auto w = gen_world(categories, dim, g.seed, stddev);
        ensure_parent(out);
        save_world(w, out);
        if (!samples_dir.empty()) write_category_samples(gen_category_samples(w, samples_per_category, g.seed + 1), samples_dir);
        if (!risk_table.empty()) {
            auto o = open_out(risk_table);
            write_risk_table(o, w.ratings);
        }
        log << fmt::format("world: {} categories, dim {}, {} rated pairs -> {}\n", w.categories.size(), w.feature_dim,
                           w.ratings.size(), out);
    }
};

struct SynthDemosCmd {
    std::string world, out;
    std::size_t traj_per_pair = 5, frames = 100;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        require_file(world, "world file");
        const auto demos = gen_demos(load_world(world), traj_per_pair, frames, g.seed);
        auto o = open_out(out);
        write_demo_log(o, demos);
        log << fmt::format("{} demo frames -> {}\n", demos.records.size(), out);
    }
};

struct SynthSceneCmd {
    std::string world, layout = "shelf", manip, category, out_prefix;
    std::size_t height = 60, width = 80;
    double distance = 0.5;

    void run(const Globals& g, std::ostream& log, std::ostream&) const {
        require_file(world, "world file");
        const auto w = load_world(world);
        const std::string m = manip.empty() ? w.categories.front().name : manip;
        SceneLayout lay;
        if (layout == "shelf") {
            lay = shelf_layout(w, m, height, width);
        } else if (layout == "full") {
            std::string c = category;
            for (const auto& cat : w.categories)
                if (c.empty() && cat.name != m) c = cat.name;
            lay = full_frame_layout(m, c, height, width, distance);
        } else {
            require_file(layout, "layout file");
            std::ifstream in(layout);
            lay = parse_layout(in);
        }
        const auto scene = gen_scene(w, lay, height, width, g.seed);
        ensure_parent(out_prefix);
        write_feature_image(scene.features, out_prefix + ".fimg");
        write_distance_image(scene.distances, out_prefix + ".dimg");
        write_mask_image(scene.masks, out_prefix + ".mimg");
        write_feature_file(scene.manip_feat, out_prefix + "_manip.txt");
        auto truth = open_out(out_prefix + "_truth.csv");
        truth << "label,category,rating\n";
        for (std::size_t i = 0; i < lay.regions.size(); ++i)
            truth << fmt::format("{},{},{}\n", i + 1, lay.regions[i].category, scene.region_ratings[i]);
        log << fmt::format("scene {}x{} with {} regions, manipulating {} -> {}.*\n", height, width, lay.regions.size(), m,
                           out_prefix);
    }
};

struct CompareCmd {
    std::string a, b;

    void run(const Globals&, std::ostream& log, std::ostream&) const {
        require_file(a, "path file");
        require_file(b, "path file");
        std::ifstream ia(a), ib(b);
        const auto pa = parse_path(ia), pb = parse_path(ib);
        log << fmt::format("dtw {}\nlength_a {}\nlength_b {}\n", fmt6(dtw_distance(pa.waypoints, pb.waypoints)),
                           fmt6(pa.length()), fmt6(pb.length()));
    }
};

}  // namespace

int exit_code_for_current_exception(std::ostream& err) {
    try {
        throw;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputMissing;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputMissing;
    } catch (const DatasetError& e) {
        err << "error: " << e.what() << '\n';
        return kExitDataset;
    } catch (const LookupError& e) {
        err << "error: " << e.what() << '\n';
        return kExitDataset;
    } catch (const TransportError& e) {
        err << "error: " << e.what() << '\n';
        return kExitDataset;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const ScoringError& e) {
        err << "error: " << e.what() << '\n';
        return kExitScoring;
    } catch (const InfeasibleInput& e) {
        err << "error: " << e.what() << '\n';
        return kExitPlanning;
    } catch (const NoPathError& e) {
        err << "error: " << e.what() << '\n';
        return kExitPlanning;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputMissing;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    } catch (...) {
        err << "internal error\n";
        return kExitInternal;
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian risk fields: LUTs, likelihood training, risk images, trajectory scoring and planning",
                 "bayesrisk"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI/TOML config; keys mirror the long option names");
    app.set_help_all_flag("--help-all", "Help for every command");

    Globals g;
    app.add_option("--lambda", g.lambda, "Prior attenuation rate (1/m)")->capture_default_str();
    app.add_option("--d_max", g.d_max, "Distance range of the likelihood CDF (m)")->capture_default_str();
    app.add_option("--alpha", g.alpha, "Viability threshold for safety radii")->capture_default_str();
    app.add_option("--percentile", g.percentile, "Per-frame risk percentile")->capture_default_str();
    app.add_option("--k", g.k, "Centroids per category")->capture_default_str();
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--fx", g.fx, "Camera focal length x (px)");
    app.add_option("--fy", g.fy, "Camera focal length y (px)");
    app.add_option("--cx", g.cx, "Camera principal point x (px)");
    app.add_option("--cy", g.cy, "Camera principal point y (px)");
    app.add_option("--endpoint_url", g.endpoint_url, "Completion endpoint URL");
    app.add_option("--endpoint_model", g.endpoint_model, "Model name forwarded to the endpoint");
    app.add_option("--token_env", g.token_env, "Environment variable holding the endpoint token")->capture_default_str();
    app.add_option("--timeout", g.timeout, "Endpoint timeout (s)")->capture_default_str();

    BuildObjectLutCmd bol;
    auto* c_bol = app.add_subcommand("build-object-lut", "K-means object LUT from per-category samples");
    c_bol->add_option("--samples", bol.samples, "Directory of <category>.txt feature files")->required();
    c_bol->add_option("--out", bol.out, "Output LUT file")->required();
    c_bol->add_option("--iterations", bol.iterations)->capture_default_str();
    c_bol->add_option("--restarts", bol.restarts)->capture_default_str();

    BuildRiskLutCmd brl;
    auto* c_brl = app.add_subcommand("build-risk-lut", "Risk table from a file, a replay fixture or the endpoint");
    c_brl->add_option("--out", brl.out, "Output risk table")->required();
    c_brl->add_option("--table", brl.table, "Existing a|b|rating|reason table to ingest");
    c_brl->add_option("--replay", brl.replay, "Recorded responses {\"responses\": [...]}");
    c_brl->add_flag("--endpoint", brl.endpoint, "Query the configured completion endpoint");
    c_brl->add_option("--categories", brl.categories, "Category list, one per line (default: bundled list)");
    c_brl->add_option("--world", brl.world, "Take the categories from a synthetic world file");
    c_brl->add_option("--prompt", brl.prompt, "Prompt template (default: bundled)");
    c_brl->add_option("--transcript", brl.transcript, "Write prompts and responses as JSON");
    c_brl->add_option("--skipped", brl.skipped, "Write pairs that never got a valid rating");
    c_brl->add_option("--batch-size", brl.batch_size)->capture_default_str();
    c_brl->add_option("--retries", brl.retries)->capture_default_str();
    c_brl->add_option("--tabletop", brl.tabletop)->capture_default_str();

    TrainCmd tr;
    auto* c_tr = app.add_subcommand("train", "Train the likelihood model on a demo log");
    c_tr->add_option("--demos", tr.demos, "Demo log")->required();
    c_tr->add_option("--out", tr.out, "Output model file")->required();
    c_tr->add_option("--history", tr.history, "Loss history CSV (default: <out>.loss.csv)");
    c_tr->add_option("--width", tr.width)->capture_default_str();
    c_tr->add_option("--layers", tr.layers)->capture_default_str();
    c_tr->add_option("--epochs", tr.epochs)->capture_default_str();
    c_tr->add_option("--batch", tr.batch)->capture_default_str();
    c_tr->add_option("--pairs-per-traj", tr.pairs_per_traj)->capture_default_str();
    c_tr->add_option("--lr", tr.lr)->capture_default_str();
    c_tr->add_option("--momentum", tr.momentum)->capture_default_str();

    EvalCmd ev;
    auto* c_ev = app.add_subcommand("eval", "Dense risk image for one scene");
    ev.post.add_to(c_ev, true);
    c_ev->add_option("--features", ev.features, "FIMG feature image")->required();
    c_ev->add_option("--distances", ev.distances, "DIMG distance image")->required();
    c_ev->add_option("--masks", ev.masks, "MIMG mask image for per-object means");
    c_ev->add_option("--out-prefix", ev.out_prefix, "Writes <prefix>.rimg, .ppm and per-object tables")->required();

    ScoreCmd sc;
    auto* c_sc = app.add_subcommand("score", "Mean per-frame percentile risk per trajectory");
    c_sc->add_option("--traj", sc.trajectories, "ID=GLOB of RIMG frames (repeatable)")->required();
    c_sc->add_option("--window", sc.window, "Use only the first and last N frames (0 = all)")->capture_default_str();
    c_sc->add_option("--out", sc.out, "Score CSV")->required();
    c_sc->add_option("--frames-out", sc.frames_out, "Per-frame score CSV");

    RankCmd rk;
    auto* c_rk = app.add_subcommand("rank", "Order trajectories by mean risk");
    c_rk->add_option("--scores", rk.scores, "Score CSV from `score`")->required();
    c_rk->add_option("--out", rk.out, "Also write the ranking here");

    RadiusCmd rd;
    auto* c_rd = app.add_subcommand("radius", "Safety radius for one scene feature");
    rd.post.add_to(c_rd, true);
    c_rd->add_option("--scene-feature", rd.scene_feature, "Text file with the scene object's feature")->required();

    PlanCmd pl;
    auto* c_pl = app.add_subcommand("plan", "Risk-aware path around inflated scene points");
    pl.post.add_to(c_pl, false);
    c_pl->add_option("--depth", pl.depth, "DIMG depth image");
    c_pl->add_option("--features", pl.features, "FIMG feature image aligned with the depth image");
    c_pl->add_option("--obstacles", pl.obstacles, "Use `x y z r` balls instead of a depth scene");
    c_pl->add_option("--obstacles-out", pl.obstacles_out, "Write the balls used");
    c_pl->add_option("--start", pl.start, "x,y,z")->required();
    c_pl->add_option("--goal", pl.goal, "x,y,z")->required();
    c_pl->add_option("--out", pl.out, "Path file")->required();
    c_pl->add_option("--report", pl.report, "Clearance report (default: <out>.report)");
    c_pl->add_option("--resolution", pl.resolution)->capture_default_str();
    c_pl->add_option("--voxel", pl.voxel)->capture_default_str();
    c_pl->add_option("--smoothing", pl.smoothing)->capture_default_str();
    c_pl->add_option("--bounds-min", pl.bounds_min)->capture_default_str();
    c_pl->add_option("--bounds-max", pl.bounds_max)->capture_default_str();

    auto* c_sy = app.add_subcommand("synth", "Synthetic worlds, demonstrations and scenes");
    c_sy->require_subcommand(1);
    SynthWorldCmd sw;
    auto* c_sw = c_sy->add_subcommand("world", "Feature clusters and ratings");
    c_sw->add_option("--categories", sw.categories)->capture_default_str();
    c_sw->add_option("--dim", sw.dim)->capture_default_str();
    c_sw->add_option("--stddev", sw.stddev)->capture_default_str();
    c_sw->add_option("--out", sw.out, "World file")->required();
    c_sw->add_option("--samples-dir", sw.samples_dir, "Also write per-category samples here");
    c_sw->add_option("--samples-per-category", sw.samples_per_category)->capture_default_str();
    c_sw->add_option("--risk-table", sw.risk_table, "Also write the ratings as a risk table");
    SynthDemosCmd sd;
    auto* c_sd = c_sy->add_subcommand("demos", "Demo log for every rated pair");
    c_sd->add_option("--world", sd.world)->required();
    c_sd->add_option("--out", sd.out)->required();
    c_sd->add_option("--traj-per-pair", sd.traj_per_pair)->capture_default_str();
    c_sd->add_option("--frames", sd.frames)->capture_default_str();
    SynthSceneCmd ss;
    auto* c_ss = c_sy->add_subcommand("scene", "Feature, distance and mask images with ground truth");
    c_ss->add_option("--world", ss.world)->required();
    c_ss->add_option("--layout", ss.layout, "shelf, full or a layout file")->capture_default_str();
    c_ss->add_option("--manip", ss.manip, "Manipulated category (default: first in the world)");
    c_ss->add_option("--category", ss.category, "Region category for the full layout");
    c_ss->add_option("--distance", ss.distance, "Distance for the full layout")->capture_default_str();
    c_ss->add_option("--height", ss.height)->capture_default_str();
    c_ss->add_option("--width", ss.width)->capture_default_str();
    c_ss->add_option("--out-prefix", ss.out_prefix)->required();

    CompareCmd cmp;
    auto* c_cmp = app.add_subcommand("compare", "DTW distance between two path files");
    c_cmp->add_option("--a", cmp.a)->required();
    c_cmp->add_option("--b", cmp.b)->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInputMissing;
    }

    try {
        if (c_bol->parsed()) bol.run(g, out, err);
        else if (c_brl->parsed()) brl.run(g, out, err);
        else if (c_tr->parsed()) tr.run(g, out, err);
        else if (c_ev->parsed()) ev.run(g, out, err);
        else if (c_sc->parsed()) sc.run(g, out, err);
        else if (c_rk->parsed()) rk.run(g, out, err);
        else if (c_rd->parsed()) rd.run(g, out, err);
        else if (c_pl->parsed()) pl.run(g, out, err);
        else if (c_sw->parsed()) sw.run(g, out, err);
        else if (c_sd->parsed()) sd.run(g, out, err);
        else if (c_ss->parsed()) ss.run(g, out, err);
        else if (c_cmp->parsed()) cmp.run(g, out, err);
        return kExitOk;
    } catch (...) {
        return exit_code_for_current_exception(err);
    }
}

}  // namespace bayesrisk
