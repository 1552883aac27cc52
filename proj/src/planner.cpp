#include "trajstitch/planner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "trajstitch/errors.hpp"

namespace trajstitch::planner {

void PlannerConfig::validate() const {
    if (temporal_jump < 2) throw ConfigError("temporal_jump must be >= 2");
    if (plan_horizon < temporal_jump + 1) throw ConfigError("plan_horizon must cover at least one jump");
    if (subgoal_horizon < 1 || subgoal_horizon > temporal_jump)
        throw ConfigError("subgoal_horizon must be in [1, temporal_jump]");
    if (replanning_interval < 0) throw ConfigError("replanning_interval must be >= 0");
    if (max_episode_steps < 1) throw ConfigError("max_episode_steps must be >= 1");
    if (!(delta_g > 0.0)) throw ConfigError("delta_g must be positive");
    if (ddim_steps < 1) throw ConfigError("ddim_steps must be >= 1");
}

Plan plan(const diffusion::NoiseModel& high_model, const diffusion::NoiseModel& stitcher,
          const maze::EnvState& current, const maze::EnvState& goal, const PlannerConfig& config, Rng& rng) {
    config.validate();
    const int n_wp = config.num_waypoints();
    if (high_model.horizon != n_wp) throw Error("plan: high-level model horizon != waypoint count");
    if (stitcher.horizon != config.temporal_jump + 1) throw Error("plan: stitcher horizon != temporal_jump + 1");

    diffusion::CondSpec cond(2);
    cond[0].index = 0;
    cond[0].value = Eigen::Vector2d(current.x, current.y);
    cond[1].index = n_wp - 1;
    cond[1].value = Eigen::Vector2d(goal.x, goal.y);
    const nn::Matrix waypoints = diffusion::ddim_sample(high_model, config.ddim_steps, rng, cond);

    Plan out;
    out.states.reserve(static_cast<size_t>((n_wp - 1) * config.temporal_jump + 1));
    for (int w = 0; w + 1 < n_wp; ++w) {
        const maze::EnvState a{waypoints(w, 0), waypoints(w, 1)};
        const maze::EnvState b{waypoints(w + 1, 0), waypoints(w + 1, 1)};
        const maze::Trajectory bridge = stitch::refine_bridge(stitcher, a, b, rng, config.ddim_steps);
        const size_t from = w == 0 ? 0 : 1;  // drop duplicated boundary state
        for (size_t t = from; t < bridge.states.size(); ++t) out.states.push_back(bridge.states[t]);
    }
    for (int w = 0; w < n_wp; ++w) out.waypoint_indices.push_back(w * config.temporal_jump);
    return out;
}

maze::ActionId low_level_act(const embed::EmbeddingModel& phi, const maze::MazeSpec& spec, const maze::EnvState& s,
                             const maze::EnvState& subgoal) {
    nn::Matrix batch(maze::kNumActions + 1, 2);
    for (maze::ActionId a = 0; a < maze::kNumActions; ++a) {
        const maze::EnvState next = maze::step(spec, s, a);
        batch.row(a) << next.x, next.y;
    }
    batch.row(maze::kNumActions) << subgoal.x, subgoal.y;
    const nn::Matrix latents = phi.embed(batch);
    const Eigen::VectorXd target = latents.row(maze::kNumActions).transpose();
    maze::ActionId best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (maze::ActionId a = 0; a < maze::kNumActions; ++a) {
        const double d = (latents.row(a).transpose() - target).norm();
        if (d < best_dist) {
            best_dist = d;
            best = a;
        }
    }
    return best;
}

double dynamic_mse(const maze::MazeSpec& spec, const maze::EnvState& s, maze::ActionId a,
                   const maze::EnvState& s_next) {
    const maze::EnvState pred = maze::step(spec, s, a);  // throws on blocked/off-grid s
    const double dx = pred.x - s_next.x;
    const double dy = pred.y - s_next.y;
    return dx * dx + dy * dy;
}

namespace {

maze::EnvState snap_to_free_center(const maze::MazeSpec& spec, const maze::EnvState& s) {
    const maze::Cell c = maze::cell_of(spec, s);
    if (spec.free_cell(c.x, c.y)) return maze::center_of(spec, c);
    double best = std::numeric_limits<double>::infinity();
    maze::Cell best_cell{0, 0};
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            if (!spec.free_cell(x, y)) continue;
            const maze::EnvState ctr = maze::center_of(spec, maze::Cell{x, y});
            const double d = (ctr.x - s.x) * (ctr.x - s.x) + (ctr.y - s.y) * (ctr.y - s.y);
            if (d < best) {
                best = d;
                best_cell = maze::Cell{x, y};
            }
        }
    }
    return maze::center_of(spec, best_cell);
}

}  // namespace

double feasibility_mse(const maze::MazeSpec& spec, const maze::EnvState& from, const maze::EnvState& to) {
    const maze::EnvState snapped = snap_to_free_center(spec, from);
    double best = std::numeric_limits<double>::infinity();
    for (maze::ActionId a = 0; a < maze::kNumActions; ++a) {
        const maze::EnvState next = maze::step(spec, snapped, a);
        const double dx = next.x - to.x;
        const double dy = next.y - to.y;
        best = std::min(best, dx * dx + dy * dy);
    }
    return best;
}

double coverage(const std::vector<maze::Trajectory>& trajectories, const maze::MazeSpec& spec) {
    std::vector<std::uint8_t> visited(static_cast<size_t>(spec.width) * spec.height, 0);
    for (const auto& t : trajectories) {
        for (const auto& s : t.states) {
            const maze::Cell c = maze::cell_of(spec, s);
            if (spec.free_cell(c.x, c.y)) visited[static_cast<size_t>(c.y) * spec.width + c.x] = 1;
        }
    }
    std::int64_t seen = 0;
    for (auto v : visited) seen += v;
    return static_cast<double>(seen) / spec.free_count();
}

EpisodeOutcome rollout_episode(const maze::MazeSpec& spec, const PlannerModels& models, const Task& task,
                               const PlannerConfig& config, std::uint64_t seed) {
    config.validate();
    if (!models.phi || !models.high_model || !models.stitcher) throw Error("rollout_episode: missing models");
    const maze::EnvState goal = maze::center_of(spec, task.goal);
    EpisodeOutcome out;
    maze::EnvState s = maze::center_of(spec, task.start);
    out.trace.push_back(s);
    if (maze::is_success(s, goal, config.delta_g)) {
        out.success = true;
        out.steps = 0;
        return out;
    }

    Rng rng(seed);
    auto make_plan = [&](const maze::EnvState& from) {
        Plan p = plan(*models.high_model, *models.stitcher, from, goal, config, rng);
        for (size_t i = 0; i + 1 < p.states.size(); ++i)
            out.plan_feasibility_mse.push_back(feasibility_mse(spec, p.states[i], p.states[i + 1]));
        out.plans.push_back(p);
        return p;
    };

    Plan current_plan = make_plan(s);
    const int last_index = static_cast<int>(current_plan.states.size()) - 1;
    int subgoal_idx = std::min(config.subgoal_horizon, last_index);
    int steps_since_subgoal = 0;

    for (int step_i = 1; step_i <= config.max_episode_steps; ++step_i) {
        if (config.replanning_interval > 0 && step_i > 1 && (step_i - 1) % config.replanning_interval == 0) {
            current_plan = make_plan(s);
            subgoal_idx = std::min(config.subgoal_horizon, last_index);
            steps_since_subgoal = 0;
        }
        const maze::EnvState subgoal = current_plan.states[static_cast<size_t>(subgoal_idx)];
        const maze::ActionId a = low_level_act(*models.phi, spec, s, subgoal);
        s = maze::step(spec, s, a);
        out.trace.push_back(s);
        ++steps_since_subgoal;
        if (maze::is_success(s, goal, config.delta_g)) {
            out.success = true;
            out.steps = step_i;
            return out;
        }
        const double dsub = std::hypot(s.x - subgoal.x, s.y - subgoal.y);
        if (dsub <= config.delta_g || steps_since_subgoal >= config.subgoal_horizon) {
            const int progress = subgoal_idx;
            subgoal_idx = std::min(progress + config.subgoal_horizon, last_index);
            steps_since_subgoal = 0;
        }
    }
    out.success = false;
    out.steps = config.max_episode_steps;
    return out;
}

namespace {

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const size_t idx = std::min(values.size() - 1, static_cast<size_t>(std::ceil(q * values.size())) - (q > 0.0 ? 1 : 0));
    return values[idx];
}

}  // namespace

EvalReport evaluate(const maze::MazeSpec& spec, const PlannerModels& models, const std::vector<Task>& tasks,
                    const PlannerConfig& config, const std::vector<std::uint64_t>& seeds, int threads) {
    if (tasks.empty()) throw Error("evaluate: need at least one task");
    if (seeds.empty()) throw Error("evaluate: need at least one seed");
    const size_t total = tasks.size() * seeds.size();
    std::vector<EpisodeOutcome> outcomes(total);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t idx = next.fetch_add(1);
            if (idx >= total) break;
            const size_t ti = idx / seeds.size();
            const size_t si = idx % seeds.size();
            outcomes[idx] = rollout_episode(spec, models, tasks[ti], config, mix_seed(seeds[si], ti));
        }
    };
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(total)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    EvalReport report;
    std::vector<double> all_mse;
    std::vector<maze::Trajectory> traces;
    double success_sum = 0.0;
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        TaskResult tr;
        tr.task = tasks[ti];
        tr.oracle_distance = maze::temporal_distance_oracle(spec, tasks[ti].start, tasks[ti].goal);
        double task_success = 0.0;
        for (size_t si = 0; si < seeds.size(); ++si) {
            const auto& ep = outcomes[ti * seeds.size() + si];
            task_success += ep.success ? 1.0 : 0.0;
            tr.episode_lengths.push_back(ep.steps);
            all_mse.insert(all_mse.end(), ep.plan_feasibility_mse.begin(), ep.plan_feasibility_mse.end());
            maze::Trajectory t;
            t.states = ep.trace;
            traces.push_back(std::move(t));
        }
        tr.success_rate = task_success / static_cast<double>(seeds.size());
        success_sum += task_success;
        report.tasks.push_back(std::move(tr));
    }
    report.success_rate = success_sum / static_cast<double>(total);
    report.median_dynamic_mse = percentile(all_mse, 0.5);
    report.p95_dynamic_mse = percentile(all_mse, 0.95);
    report.coverage_fraction = coverage(traces, spec);
    return report;
}

json report_to_json(const EvalReport& report) {
    json tasks = json::array();
    for (const auto& tr : report.tasks) {
        tasks.push_back(json{{"start", {tr.task.start.x, tr.task.start.y}},
                             {"goal", {tr.task.goal.x, tr.task.goal.y}},
                             {"oracle_distance", tr.oracle_distance},
                             {"success_rate", tr.success_rate},
                             {"episode_lengths", tr.episode_lengths}});
    }
    return json{{"success_rate", report.success_rate},
                {"tasks", tasks},
                {"median_dynamic_mse", report.median_dynamic_mse},
                {"p95_dynamic_mse", report.p95_dynamic_mse},
                {"coverage_fraction", report.coverage_fraction},
                {"config", report.config_echo}};
}

std::vector<Task> make_task_catalog(const maze::MazeSpec& spec, int count, int min_d, int max_d, std::uint64_t seed) {
    if (count < 1) throw ConfigError("task count must be >= 1");
    if (min_d < 0 || max_d < min_d) throw ConfigError("invalid task distance range");
    std::vector<maze::Cell> cells;
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            if (spec.free_cell(x, y)) cells.push_back(maze::Cell{x, y});
    if (cells.size() < 2) throw ConfigError("maze too small for tasks");

    Rng rng(mix_seed(seed, 0x7a5c));
    std::vector<Task> tasks;
    const int max_attempts = count * 2000 + 10000;
    int attempts = 0;
    while (static_cast<int>(tasks.size()) < count && attempts++ < max_attempts) {
        const auto& a = cells[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
        const auto& b = cells[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
        const int d = maze::temporal_distance_oracle(spec, a, b);
        if (d == maze::kUnreachable || d < min_d || d > max_d) continue;
        tasks.push_back(Task{a, b});
    }
    if (static_cast<int>(tasks.size()) < count)
        throw ConfigError("could not sample enough tasks in the requested distance range");
    return tasks;
}

json tasks_to_json(const std::vector<Task>& tasks) {
    json arr = json::array();
    for (const auto& t : tasks)
        arr.push_back(json{{"start", {t.start.x, t.start.y}}, {"goal", {t.goal.x, t.goal.y}}});
    return arr;
}

std::vector<Task> tasks_from_json(const json& j) {
    std::vector<Task> tasks;
    for (const auto& item : j) {
        Task t;
        t.start = maze::Cell{item.at("start").at(0).get<int>(), item.at("start").at(1).get<int>()};
        t.goal = maze::Cell{item.at("goal").at(0).get<int>(), item.at("goal").at(1).get<int>()};
        tasks.push_back(t);
    }
    return tasks;
}

}  // namespace trajstitch::planner
