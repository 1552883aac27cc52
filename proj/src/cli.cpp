#include "trajstitch/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "trajstitch/augmenter.hpp"
#include "trajstitch/diffusion.hpp"
#include "trajstitch/embedding.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/manifest.hpp"
#include "trajstitch/maze.hpp"
#include "trajstitch/planner.hpp"
#include "trajstitch/segment_index.hpp"
#include "trajstitch/svg.hpp"

namespace trajstitch::cli {

RunConfig::RunConfig(std::map<std::string, std::string> defaults) : values_(std::move(defaults)) {}

void RunConfig::load_file(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        set(line.substr(0, eq), line.substr(eq + 1));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    it->second = value;
}

void RunConfig::set_kv(const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got: " + kv);
    set(kv.substr(0, eq), kv.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: " + v);
    }
}

std::uint64_t RunConfig::get_seed(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        const std::uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a seed: " + v);
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: " + v);
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<int> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not an int list: " + v);
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
    return out;
}

std::vector<std::uint64_t> RunConfig::get_seed_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<std::uint64_t> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not a seed list: " + v);
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
    return out;
}

json RunConfig::echo() const {
    json j = json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

std::string RunConfig::config_hash() const { return sha256_hex(dump_json(echo())); }

// ---------------------------------------------------------------------------
// schemas

std::map<std::string, std::string> gen_data_schema() {
    return {{"spec", "medium"}, {"kind", "stitch"},      {"out", "dataset.ndjson"}, {"seed", "0"},
            {"n_episodes", "500"}, {"ep_len", "200"},     {"max_span", "4"},         {"resample_interval", "10"},
            {"noise_prob", "0.2"}};
}

namespace {

std::map<std::string, std::string> train_common(std::map<std::string, std::string> extra) {
    std::map<std::string, std::string> base{{"data", "dataset.ndjson"}, {"out", "model.bin"}, {"seed", "0"},
                                            {"log_every", "200"},       {"resume", ""},       {"save_state", ""}};
    base.merge(extra);
    return base;
}

}  // namespace

std::map<std::string, std::string> train_embedding_schema() {
    return train_common({{"steps", "20000"},
                         {"batch", "256"},
                         {"lr", "0.0003"},
                         {"gamma", "0.99"},
                         {"xi", "0.95"},
                         {"polyak", "0.005"},
                         {"latent_dim", "32"},
                         {"hidden", "128,128,128"},
                         {"p_hindsight", "0.8"},
                         {"geometric_p", "0.1"},
                         {"equal_threshold", "-1"}});
}

std::map<std::string, std::string> train_stitcher_schema() {
    return train_common({{"steps", "20000"},
                         {"batch", "64"},
                         {"lr", "0.0002"},
                         {"weight_decay", "0.00001"},
                         {"diffusion_steps", "1000"},
                         {"schedule", "cosine"},
                         {"hidden", "256,256,256"},
                         {"horizon", "26"}});
}

std::map<std::string, std::string> train_planner_schema() {
    return train_common({{"steps", "20000"},
                         {"batch", "64"},
                         {"lr", "0.0002"},
                         {"weight_decay", "0.00001"},
                         {"diffusion_steps", "1000"},
                         {"schedule", "cosine"},
                         {"hidden", "256,256,256"},
                         {"plan_horizon", "101"},
                         {"jump", "25"}});
}

std::map<std::string, std::string> train_inverse_schema() {
    return train_common({{"steps", "8000"}, {"batch", "256"}, {"lr", "0.0003"}, {"hidden", "128,128,128"}});
}

std::map<std::string, std::string> build_index_schema() {
    return {{"data", "dataset.ndjson"}, {"embedding", "embedding.bin"}, {"out", "index.ivf"}, {"h_seg", "26"},
            {"stride", "13"},           {"n_list", "0"},                {"n_probe", "32"},    {"seed", "0"}};
}

std::map<std::string, std::string> augment_schema() {
    return {{"data", "dataset.ndjson"},
            {"embedding", "embedding.bin"},
            {"stitcher", "stitcher.bin"},
            {"inverse", "inverse.bin"},
            {"index", "index.ivf"},
            {"out", "augmented.ndjson"},
            {"n_traj", "100"},
            {"n_stitch", "10"},
            {"k", "10"},
            {"k_density", "30"},
            {"beta", "2.0"},
            {"seed", "0"},
            {"threads", "0"}};
}

std::map<std::string, std::string> eval_schema() {
    return {{"maze", "medium"},
            {"embedding", "embedding.bin"},
            {"stitcher", "stitcher.bin"},
            {"planner", "planner.bin"},
            {"tasks", "tasks.json"},
            {"out", "report.json"},
            {"seeds", "0,1,2,3,4"},
            {"replanning", "50"},
            {"subgoal_horizon", "10"},
            {"max_episode_steps", "200"},
            {"delta_g", "0.5"},
            {"plan_horizon", "101"},
            {"jump", "25"},
            {"ddim_steps", "20"},
            {"threads", "0"},
            {"svg_dir", ""}};
}

std::map<std::string, std::string> make_tasks_schema() {
    return {{"maze", "medium"}, {"out", "tasks.json"}, {"count", "20"},
            {"min_d", "8"},     {"max_d", "1000000"},  {"seed", "0"}};
}

std::map<std::string, std::string> plot_schema() {
    return {{"data", "dataset.ndjson"}, {"out_dir", "plots"}, {"subsets", "0-9"}};
}

std::map<std::string, std::string> schema_for(const std::string& command) {
    if (command == "gen-data") return gen_data_schema();
    if (command == "train-embedding") return train_embedding_schema();
    if (command == "train-stitcher") return train_stitcher_schema();
    if (command == "train-planner") return train_planner_schema();
    if (command == "train-inverse") return train_inverse_schema();
    if (command == "build-index") return build_index_schema();
    if (command == "augment") return augment_schema();
    if (command == "eval") return eval_schema();
    if (command == "make-tasks") return make_tasks_schema();
    if (command == "plot") return plot_schema();
    throw ConfigError("unknown command: " + command);
}

// ---------------------------------------------------------------------------
// helpers

namespace {

int resolve_threads(std::int64_t requested) {
    if (requested > 0) return static_cast<int>(requested);
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Adds the effective run config into an artifact's sidecar meta file.
void inject_config_sidecar(const std::string& artifact_path, const json& echo) {
    const std::string side = artifact_path + ".meta.json";
    json meta = parse_json(read_file(side));
    meta["config"] = echo;
    write_file(side, dump_json(meta) + "\n");
}

struct LossLog {
    std::vector<std::pair<std::int64_t, double>> rows;

    void maybe_log(std::int64_t step, double loss, std::int64_t log_every, std::int64_t total) {
        if (step % log_every == 0 || step == total) rows.emplace_back(step, loss);
    }
    void write(const std::string& path) const {
        std::string out = "step,loss\n";
        for (const auto& [s, l] : rows) out += std::to_string(s) + "," + format_double(l) + "\n";
        write_file(path, out);
    }
};

void ensure_parent_dir(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace

// ---------------------------------------------------------------------------
// commands

void cmd_gen_data(const RunConfig& cfg, const std::string& workdir) {
    const maze::MazeSpec spec = maze::load_maze(cfg.get("spec"));
    const std::string kind = cfg.get("kind");
    const std::string out = cfg.get("out");
    maze::Dataset ds;
    if (kind == "stitch") {
        ds = maze::generate_stitch_dataset(spec, static_cast<int>(cfg.get_int("n_episodes")),
                                           static_cast<int>(cfg.get_int("max_span")),
                                           static_cast<int>(cfg.get_int("ep_len")), cfg.get_seed("seed"));
    } else if (kind == "explore") {
        ds = maze::generate_explore_dataset(spec, static_cast<int>(cfg.get_int("n_episodes")),
                                            static_cast<int>(cfg.get_int("ep_len")),
                                            static_cast<int>(cfg.get_int("resample_interval")),
                                            cfg.get_double("noise_prob"), cfg.get_seed("seed"));
    } else {
        throw ConfigError("kind must be 'stitch' or 'explore', got: " + kind);
    }
    ds.meta["config"] = cfg.echo();
    ensure_parent_dir(out);
    maze::save_dataset(ds, out);
    auto manifest = ArtifactManifest::load(workdir);
    manifest.record(out, "gen-data", cfg.config_hash());
    manifest.save();
}

void cmd_train_embedding(const RunConfig& cfg, const std::string& workdir) {
    auto manifest = ArtifactManifest::load(workdir);
    manifest.check_input(cfg.get("data"));
    const maze::Dataset ds = maze::load_dataset(cfg.get("data"));

    embed::EmbedTrainConfig tc;
    tc.gamma = cfg.get_double("gamma");
    tc.xi = cfg.get_double("xi");
    tc.batch_size = static_cast<int>(cfg.get_int("batch"));
    tc.train_steps = cfg.get_int("steps");
    tc.polyak = cfg.get_double("polyak");
    tc.goal_mix.p_hindsight = cfg.get_double("p_hindsight");
    tc.goal_mix.p_random = 1.0 - tc.goal_mix.p_hindsight;
    tc.goal_mix.geometric_p = cfg.get_double("geometric_p");
    tc.equal_threshold = cfg.get_double("equal_threshold");
    tc.hidden = cfg.get_int_list("hidden");
    tc.latent_dim = static_cast<int>(cfg.get_int("latent_dim"));
    tc.lr = cfg.get_double("lr");
    tc.seed = cfg.get_seed("seed");

    embed::EmbedTrainer trainer(ds, tc);
    if (!cfg.get("resume").empty()) trainer.restore_state(read_file(cfg.get("resume")));

    const std::int64_t log_every = std::max<std::int64_t>(1, cfg.get_int("log_every"));
    LossLog log;
    while (trainer.step() < tc.train_steps) {
        const double loss = trainer.train_step();
        log.maybe_log(trainer.step(), loss, log_every, tc.train_steps);
    }

    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    embed::save_embedding(trainer.model(), tc.gamma, tc.xi, out);
    inject_config_sidecar(out, cfg.echo());
    log.write(out + ".loss.csv");
    if (!cfg.get("save_state").empty()) write_file(cfg.get("save_state"), trainer.serialize_state());
    manifest.record(out, "train-embedding", cfg.config_hash());
    manifest.save();
}

namespace {

void run_diffusion_training(const RunConfig& cfg, const std::string& workdir, const std::string& command,
                            int horizon, int jump) {
    auto manifest = ArtifactManifest::load(workdir);
    manifest.check_input(cfg.get("data"));
    const maze::Dataset ds = maze::load_dataset(cfg.get("data"));

    diffusion::DiffTrainConfig tc;
    tc.diffusion_steps = static_cast<int>(cfg.get_int("diffusion_steps"));
    tc.kind = diffusion::schedule_kind_from_name(cfg.get("schedule"));
    tc.hidden = cfg.get_int_list("hidden");
    tc.lr = cfg.get_double("lr");
    tc.weight_decay = cfg.get_double("weight_decay");
    tc.batch_size = static_cast<int>(cfg.get_int("batch"));
    tc.train_steps = cfg.get_int("steps");
    tc.horizon = horizon;
    tc.jump = jump;
    tc.seed = cfg.get_seed("seed");

    diffusion::DiffusionTrainer trainer(ds, tc);
    if (!cfg.get("resume").empty()) trainer.restore_state(read_file(cfg.get("resume")));

    const std::int64_t log_every = std::max<std::int64_t>(1, cfg.get_int("log_every"));
    LossLog log;
    while (trainer.step() < tc.train_steps) {
        const double loss = trainer.train_step();
        log.maybe_log(trainer.step(), loss, log_every, tc.train_steps);
    }

    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    diffusion::save_noise_model(trainer.model(), out);
    inject_config_sidecar(out, cfg.echo());
    log.write(out + ".loss.csv");
    if (!cfg.get("save_state").empty()) write_file(cfg.get("save_state"), trainer.serialize_state());
    manifest.record(out, command, cfg.config_hash());
    manifest.save();
}

}  // namespace

void cmd_train_stitcher(const RunConfig& cfg, const std::string& workdir) {
    run_diffusion_training(cfg, workdir, "train-stitcher", static_cast<int>(cfg.get_int("horizon")), 1);
}

void cmd_train_planner(const RunConfig& cfg, const std::string& workdir) {
    const int jump = static_cast<int>(cfg.get_int("jump"));
    const int plan_horizon = static_cast<int>(cfg.get_int("plan_horizon"));
    if (jump < 2) throw ConfigError("jump must be >= 2");
    if (plan_horizon < jump + 1) throw ConfigError("plan_horizon must cover at least one jump");
    const int n_wp = (plan_horizon - 2 + jump) / jump + 1;
    run_diffusion_training(cfg, workdir, "train-planner", n_wp, jump);
}

void cmd_train_inverse(const RunConfig& cfg, const std::string& workdir) {
    auto manifest = ArtifactManifest::load(workdir);
    manifest.check_input(cfg.get("data"));
    const maze::Dataset ds = maze::load_dataset(cfg.get("data"));

    stitch::InvDynTrainConfig tc;
    tc.hidden = cfg.get_int_list("hidden");
    tc.lr = cfg.get_double("lr");
    tc.batch_size = static_cast<int>(cfg.get_int("batch"));
    tc.train_steps = cfg.get_int("steps");
    tc.seed = cfg.get_seed("seed");

    stitch::InvDynTrainer trainer(ds, tc);
    if (!cfg.get("resume").empty()) trainer.restore_state(read_file(cfg.get("resume")));

    const std::int64_t log_every = std::max<std::int64_t>(1, cfg.get_int("log_every"));
    LossLog log;
    while (trainer.step() < tc.train_steps) {
        const double loss = trainer.train_step();
        log.maybe_log(trainer.step(), loss, log_every, tc.train_steps);
    }

    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    stitch::save_inverse_dynamics(trainer.model(), out);
    inject_config_sidecar(out, cfg.echo());
    log.write(out + ".loss.csv");
    if (!cfg.get("save_state").empty()) write_file(cfg.get("save_state"), trainer.serialize_state());
    manifest.record(out, "train-inverse", cfg.config_hash());
    manifest.save();
}

void cmd_build_index(const RunConfig& cfg, const std::string& workdir) {
    auto manifest = ArtifactManifest::load(workdir);
    manifest.check_input(cfg.get("data"));
    manifest.check_input(cfg.get("embedding"));
    const maze::Dataset ds = maze::load_dataset(cfg.get("data"));
    const embed::EmbeddingModel model = embed::load_embedding(cfg.get("embedding"));

    ivf::ExtractReport report;
    const auto segments = ivf::extract_segments(ds, model, static_cast<int>(cfg.get_int("h_seg")),
                                                static_cast<int>(cfg.get_int("stride")), &report);
    if (segments.empty()) throw ConfigError("no segments extracted; h_seg exceeds every trajectory");
    const Eigen::MatrixXd keys = ivf::segment_keys(segments);
    std::int64_t n_list = cfg.get_int("n_list");
    if (n_list <= 0) n_list = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::sqrt(static_cast<double>(keys.rows()))));
    n_list = std::min<std::int64_t>(n_list, keys.rows());

    ivf::IVFIndex index = ivf::build_ivf(keys, static_cast<int>(n_list), cfg.get_seed("seed"));
    index.default_n_probe = static_cast<int>(cfg.get_int("n_probe"));

    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    ivf::save_ivf(index, out);
    json meta{{"kind", "ivf_index_meta"},
              {"config", cfg.echo()},
              {"records", report.records},
              {"skipped_trajectories", report.skipped_trajectories}};
    write_file(out + ".meta.json", dump_json(meta) + "\n");
    manifest.record(out, "build-index", cfg.config_hash());
    manifest.save();
}

void cmd_augment(const RunConfig& cfg, const std::string& workdir) {
    auto manifest = ArtifactManifest::load(workdir);
    for (const char* key : {"data", "embedding", "stitcher", "inverse", "index"}) manifest.check_input(cfg.get(key));

    const maze::Dataset ds = maze::load_dataset(cfg.get("data"));
    const embed::EmbeddingModel phi = embed::load_embedding(cfg.get("embedding"));
    const diffusion::NoiseModel stitcher = diffusion::load_noise_model(cfg.get("stitcher"));
    const stitch::InverseDynamicsModel f_psi = stitch::load_inverse_dynamics(cfg.get("inverse"));

    // segment extraction must match the index build; its sidecar records h_seg/stride
    const json index_meta = parse_json(read_file(cfg.get("index") + ".meta.json"));
    const int h_seg = std::stoi(index_meta.at("config").at("h_seg").get<std::string>());
    const int stride = std::stoi(index_meta.at("config").at("stride").get<std::string>());
    const auto segments = ivf::extract_segments(ds, phi, h_seg, stride);
    const Eigen::MatrixXd keys = ivf::segment_keys(segments);
    const ivf::IVFIndex index = ivf::load_ivf(cfg.get("index"), keys);

    stitch::StitchConfig sc;
    sc.k = static_cast<int>(cfg.get_int("k"));
    sc.k_density = static_cast<int>(cfg.get_int("k_density"));
    sc.beta = cfg.get_double("beta");
    sc.n_stitch = static_cast<int>(cfg.get_int("n_stitch"));
    sc.n_traj = static_cast<int>(cfg.get_int("n_traj"));
    sc.h_stitcher = stitcher.horizon;
    sc.seed = cfg.get_seed("seed");

    stitch::StitchContext ctx;
    ctx.data = &ds;
    ctx.segments = &segments;
    ctx.index = &index;
    ctx.phi = &phi;
    ctx.stitcher = &stitcher;
    ctx.f_psi = &f_psi;

    json inputs = json::object();
    for (const char* key : {"data", "embedding", "stitcher", "inverse", "index"})
        inputs[cfg.get(key)] = sha256_file(cfg.get(key));
    json extra{{"config", cfg.echo()}, {"inputs", inputs}};

    maze::Dataset out_ds = stitch::augment_dataset(ctx, sc, resolve_threads(cfg.get_int("threads")), extra);
    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    maze::save_dataset(out_ds, out);
    manifest.record(out, "augment", cfg.config_hash());
    manifest.save();
}

void cmd_eval(const RunConfig& cfg, const std::string& workdir) {
    auto manifest = ArtifactManifest::load(workdir);
    for (const char* key : {"embedding", "stitcher", "planner"}) manifest.check_input(cfg.get(key));

    const maze::MazeSpec spec = maze::load_maze(cfg.get("maze"));
    const embed::EmbeddingModel phi = embed::load_embedding(cfg.get("embedding"));
    const diffusion::NoiseModel stitcher = diffusion::load_noise_model(cfg.get("stitcher"));
    const diffusion::NoiseModel high = diffusion::load_noise_model(cfg.get("planner"));

    const json tasks_doc = parse_json(read_file(cfg.get("tasks")));
    const std::vector<planner::Task> tasks =
        planner::tasks_from_json(tasks_doc.contains("tasks") ? tasks_doc.at("tasks") : tasks_doc);

    planner::PlannerConfig pc;
    pc.plan_horizon = static_cast<int>(cfg.get_int("plan_horizon"));
    pc.temporal_jump = static_cast<int>(cfg.get_int("jump"));
    const std::string replanning = cfg.get("replanning");
    if (replanning == "off") {
        pc.replanning_interval = 0;
    } else {
        try {
            pc.replanning_interval = std::stoi(replanning);
        } catch (const std::exception&) {
            throw ConfigError("replanning must be an interval or 'off', got: " + replanning);
        }
    }
    pc.subgoal_horizon = static_cast<int>(cfg.get_int("subgoal_horizon"));
    pc.max_episode_steps = static_cast<int>(cfg.get_int("max_episode_steps"));
    pc.delta_g = cfg.get_double("delta_g");
    pc.ddim_steps = static_cast<int>(cfg.get_int("ddim_steps"));

    planner::PlannerModels models;
    models.phi = &phi;
    models.high_model = &high;
    models.stitcher = &stitcher;

    const auto seeds = cfg.get_seed_list("seeds");
    planner::EvalReport report =
        planner::evaluate(spec, models, tasks, pc, seeds, resolve_threads(cfg.get_int("threads")));
    report.config_echo = cfg.echo();

    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    write_file(out, dump_json(planner::report_to_json(report)) + "\n");

    const std::string svg_dir = cfg.get("svg_dir");
    if (!svg_dir.empty()) {
        std::filesystem::create_directories(svg_dir);
        for (size_t ti = 0; ti < tasks.size(); ++ti) {
            const auto outcome = planner::rollout_episode(spec, models, tasks[ti], pc, mix_seed(seeds[0], ti));
            std::vector<svg::Polyline> lines;
            for (size_t pi = 0; pi < outcome.plans.size(); ++pi)
                lines.push_back(svg::Polyline{outcome.plans[pi].states, "#bbbbbb", 0.05});
            lines.push_back(svg::Polyline{outcome.trace, svg::palette_color(ti), 0.09});
            std::vector<svg::Marker> markers{
                svg::Marker{maze::center_of(spec, tasks[ti].start), "#2ca02c", 0.18},
                svg::Marker{maze::center_of(spec, tasks[ti].goal), "#d62728", 0.18}};
            svg::write_maze_svg(svg_dir + "/task_" + std::to_string(ti) + ".svg", spec, lines, markers);
        }
    }
    manifest.record(out, "eval", cfg.config_hash());
    manifest.save();
}

void cmd_make_tasks(const RunConfig& cfg, const std::string& workdir) {
    const maze::MazeSpec spec = maze::load_maze(cfg.get("maze"));
    const auto tasks =
        planner::make_task_catalog(spec, static_cast<int>(cfg.get_int("count")), static_cast<int>(cfg.get_int("min_d")),
                                   static_cast<int>(cfg.get_int("max_d")), cfg.get_seed("seed"));
    json doc{{"config", cfg.echo()}, {"tasks", planner::tasks_to_json(tasks)}};
    const std::string out = cfg.get("out");
    ensure_parent_dir(out);
    write_file(out, dump_json(doc) + "\n");
    auto manifest = ArtifactManifest::load(workdir);
    manifest.record(out, "make-tasks", cfg.config_hash());
    manifest.save();
}

namespace {

// "0-9" or "3" or "0-4;7;9-12" -> list of episode-index lists
std::vector<std::vector<size_t>> parse_subsets(const std::string& text, size_t available) {
    std::vector<std::vector<size_t>> subsets;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ';')) {
        std::vector<size_t> subset;
        const size_t dash = part.find('-');
        try {
            size_t lo, hi;
            if (dash == std::string::npos) {
                lo = hi = std::stoul(part);
            } else {
                lo = std::stoul(part.substr(0, dash));
                hi = std::stoul(part.substr(dash + 1));
            }
            for (size_t i = lo; i <= hi && i < available; ++i) subset.push_back(i);
        } catch (const std::exception&) {
            throw ConfigError("bad subset spec: " + part);
        }
        if (!subset.empty()) subsets.push_back(std::move(subset));
    }
    if (subsets.empty()) throw ConfigError("subsets selected no trajectories");
    return subsets;
}

}  // namespace

void cmd_plot(const RunConfig& cfg, const std::string& workdir) {
    auto manifest = ArtifactManifest::load(workdir);
    manifest.check_input(cfg.get("data"));
    const maze::Dataset ds = maze::load_dataset(cfg.get("data"));
    const std::string out_dir = cfg.get("out_dir");
    std::filesystem::create_directories(out_dir);
    const auto subsets = parse_subsets(cfg.get("subsets"), ds.trajectories.size());
    for (size_t si = 0; si < subsets.size(); ++si) {
        std::vector<svg::Polyline> lines;
        for (size_t j = 0; j < subsets[si].size(); ++j) {
            const auto& traj = ds.trajectories[subsets[si][j]];
            lines.push_back(svg::Polyline{traj.states, svg::palette_color(j), 0.07});
        }
        svg::write_maze_svg(out_dir + "/subset_" + std::to_string(si) + ".svg", ds.spec, lines);
    }
    write_file(out_dir + "/meta.json", dump_json(json{{"config", cfg.echo()}}) + "\n");
}

int run_command(const std::string& command, const std::string& config_file,
                const std::vector<std::string>& overrides, const std::string& workdir) {
    try {
        RunConfig cfg(schema_for(command));
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& kv : overrides) cfg.set_kv(kv);
        if (command == "gen-data") cmd_gen_data(cfg, workdir);
        else if (command == "train-embedding") cmd_train_embedding(cfg, workdir);
        else if (command == "train-stitcher") cmd_train_stitcher(cfg, workdir);
        else if (command == "train-planner") cmd_train_planner(cfg, workdir);
        else if (command == "train-inverse") cmd_train_inverse(cfg, workdir);
        else if (command == "build-index") cmd_build_index(cfg, workdir);
        else if (command == "augment") cmd_augment(cfg, workdir);
        else if (command == "eval") cmd_eval(cfg, workdir);
        else if (command == "make-tasks") cmd_make_tasks(cfg, workdir);
        else if (command == "plot") cmd_plot(cfg, workdir);
        else throw ConfigError("unknown command: " + command);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const StaleArtifactError& e) {
        std::fprintf(stderr, "stale artifact: %s\n", e.what());
        return kExitStale;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace trajstitch::cli
