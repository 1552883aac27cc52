#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajstitch/augmenter.hpp"
#include "trajstitch/diffusion.hpp"
#include "trajstitch/embedding.hpp"
#include "trajstitch/maze.hpp"

namespace trajstitch::planner {

struct PlannerConfig {
    int plan_horizon = 101;       // dense plan states
    int temporal_jump = 25;       // waypoint spacing; bridge horizon is jump + 1
    int replanning_interval = 50; // env steps between replans; 0 = never
    int subgoal_horizon = 10;     // plan indices the tracked subgoal leads by
    int max_episode_steps = 200;
    double delta_g = 0.5;         // success / subgoal-reached threshold
    int ddim_steps = 20;

    int num_waypoints() const { return (plan_horizon - 2 + temporal_jump) / temporal_jump + 1; }
    void validate() const;
};

struct Plan {
    std::vector<maze::EnvState> states;   // dense, (num_waypoints - 1) * jump + 1 entries
    std::vector<int> waypoint_indices;    // every jump-th index
};

// Waypoint inpainting with the high-level model (first = current, last =
// goal), then bridge filling between consecutive waypoints with the stitcher.
Plan plan(const diffusion::NoiseModel& high_model, const diffusion::NoiseModel& stitcher,
          const maze::EnvState& current, const maze::EnvState& goal, const PlannerConfig& config, Rng& rng);

// One-step lookahead with exact dynamics: argmin over actions of the latent
// distance between step(s, a) and the subgoal; ties go to the smaller id.
maze::ActionId low_level_act(const embed::EmbeddingModel& phi, const maze::MazeSpec& spec, const maze::EnvState& s,
                             const maze::EnvState& subgoal);

// ||f*(s, a) - s_next||^2; s must lie on a free cell.
double dynamic_mse(const maze::MazeSpec& spec, const maze::EnvState& s, maze::ActionId a,
                   const maze::EnvState& s_next);

// Feasibility of a generated transition: snap `from` to its nearest free cell
// center, execute the best single action, and measure the squared miss.
double feasibility_mse(const maze::MazeSpec& spec, const maze::EnvState& from, const maze::EnvState& to);

// Unique free cells visited divided by total free cells.
double coverage(const std::vector<maze::Trajectory>& trajectories, const maze::MazeSpec& spec);

struct Task {
    maze::Cell start;
    maze::Cell goal;
};

struct PlannerModels {
    const embed::EmbeddingModel* phi = nullptr;
    const diffusion::NoiseModel* high_model = nullptr;
    const diffusion::NoiseModel* stitcher = nullptr;
};

struct EpisodeOutcome {
    bool success = false;
    int steps = 0;  // env steps taken until success or budget exhaustion
    std::vector<maze::EnvState> trace;
    std::vector<Plan> plans;
    std::vector<double> plan_feasibility_mse;  // per generated plan transition
};

EpisodeOutcome rollout_episode(const maze::MazeSpec& spec, const PlannerModels& models, const Task& task,
                               const PlannerConfig& config, std::uint64_t seed);

struct TaskResult {
    Task task;
    int oracle_distance = 0;
    double success_rate = 0.0;
    std::vector<int> episode_lengths;  // one per seed
};

struct EvalReport {
    double success_rate = 0.0;
    std::vector<TaskResult> tasks;
    double median_dynamic_mse = 0.0;
    double p95_dynamic_mse = 0.0;
    double coverage_fraction = 0.0;  // of all episode traces
    json config_echo = json::object();
};

EvalReport evaluate(const maze::MazeSpec& spec, const PlannerModels& models, const std::vector<Task>& tasks,
                    const PlannerConfig& config, const std::vector<std::uint64_t>& seeds, int threads = 1);

json report_to_json(const EvalReport& report);

// Stratified (start, goal) catalog: uniformly sampled free-cell pairs whose
// oracle distance lies in [min_d, max_d].
std::vector<Task> make_task_catalog(const maze::MazeSpec& spec, int count, int min_d, int max_d, std::uint64_t seed);

json tasks_to_json(const std::vector<Task>& tasks);
std::vector<Task> tasks_from_json(const json& j);

}  // namespace trajstitch::planner
