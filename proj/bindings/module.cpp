#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "trajstitch/augmenter.hpp"
#include "trajstitch/diffusion.hpp"
#include "trajstitch/embedding.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/maze.hpp"
#include "trajstitch/nn.hpp"
#include "trajstitch/planner.hpp"
#include "trajstitch/segment_index.hpp"

namespace py = pybind11;
using namespace trajstitch;

namespace {

// Bundles segment extraction + index build + rollout context so python code
// can drive augmentation without juggling raw pointers.
struct AugmentEngine {
    maze::Dataset data;
    embed::EmbeddingModel phi;
    diffusion::NoiseModel stitcher;
    stitch::InverseDynamicsModel f_psi;
    std::vector<ivf::SegmentRecord> segments;
    ivf::IVFIndex index;

    AugmentEngine(maze::Dataset data_, embed::EmbeddingModel phi_, diffusion::NoiseModel stitcher_,
                  stitch::InverseDynamicsModel f_psi_, int h_seg, int stride, int n_list, std::uint64_t seed)
        : data(std::move(data_)), phi(std::move(phi_)), stitcher(std::move(stitcher_)), f_psi(std::move(f_psi_)) {
        segments = ivf::extract_segments(data, phi, h_seg, stride);
        if (segments.empty()) throw Error("AugmentEngine: no segments extracted");
        const Eigen::MatrixXd keys = ivf::segment_keys(segments);
        if (n_list <= 0) n_list = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(keys.rows()))));
        n_list = std::min<int>(n_list, static_cast<int>(keys.rows()));
        index = ivf::build_ivf(keys, n_list, seed);
    }

    stitch::StitchContext context() const {
        stitch::StitchContext ctx;
        ctx.data = &data;
        ctx.segments = &segments;
        ctx.index = &index;
        ctx.phi = &phi;
        ctx.stitcher = &stitcher;
        ctx.f_psi = &f_psi;
        return ctx;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Trajectory stitching augmentation and diffusion planning on grid mazes";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<InvalidStateError>(m, "InvalidStateError", PyExc_ValueError);

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("uniform", py::overload_cast<>(&Rng::uniform))
        .def("uniform_int", &Rng::uniform_int, py::arg("lo"), py::arg("hi"))
        .def("normal", &Rng::normal)
        .def("geometric", &Rng::geometric, py::arg("p"));
    m.def("mix_seed", &mix_seed, py::arg("seed"), py::arg("stream"));

    // --- maze -----------------------------------------------------------
    py::class_<maze::MazeSpec>(m, "MazeSpec")
        .def(py::init<>())
        .def_readwrite("width", &maze::MazeSpec::width)
        .def_readwrite("height", &maze::MazeSpec::height)
        .def_readwrite("cell_size", &maze::MazeSpec::cell_size)
        .def("free_cell", &maze::MazeSpec::free_cell, py::arg("cx"), py::arg("cy"))
        .def("free_count", &maze::MazeSpec::free_count)
        .def("__repr__", [](const maze::MazeSpec& s) {
            return "MazeSpec(" + std::to_string(s.width) + "x" + std::to_string(s.height) + ")";
        });

    py::class_<maze::EnvState>(m, "EnvState")
        .def(py::init<>())
        .def(py::init([](double x, double y) { return maze::EnvState{x, y}; }), py::arg("x"), py::arg("y"))
        .def_readwrite("x", &maze::EnvState::x)
        .def_readwrite("y", &maze::EnvState::y)
        .def("__repr__", [](const maze::EnvState& s) {
            return "EnvState(" + std::to_string(s.x) + ", " + std::to_string(s.y) + ")";
        });

    py::class_<maze::Cell>(m, "Cell")
        .def(py::init([](int x, int y) { return maze::Cell{x, y}; }), py::arg("x"), py::arg("y"))
        .def_readwrite("x", &maze::Cell::x)
        .def_readwrite("y", &maze::Cell::y)
        .def("__repr__",
             [](const maze::Cell& c) { return "Cell(" + std::to_string(c.x) + ", " + std::to_string(c.y) + ")"; });

    py::class_<maze::Trajectory>(m, "Trajectory")
        .def(py::init<>())
        .def_readwrite("states", &maze::Trajectory::states)
        .def_readwrite("actions", &maze::Trajectory::actions)
        .def_readwrite("episode_id", &maze::Trajectory::episode_id)
        .def("__len__", [](const maze::Trajectory& t) { return t.states.size(); });

    py::class_<maze::Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readwrite("spec", &maze::Dataset::spec)
        .def_readwrite("trajectories", &maze::Dataset::trajectories)
        .def("transition_count", &maze::Dataset::transition_count)
        .def_property_readonly("meta", [](const maze::Dataset& d) { return d.meta.dump(); });

    m.attr("NUM_ACTIONS") = maze::kNumActions;
    m.attr("STAY_ACTION") = maze::kStayAction;
    m.attr("UNREACHABLE") = maze::kUnreachable;
    m.def("action_dx", &maze::action_dx);
    m.def("action_dy", &maze::action_dy);
    m.def("cell_of", &maze::cell_of);
    m.def("center_of", &maze::center_of);
    m.def("step", &maze::step, py::arg("spec"), py::arg("s"), py::arg("a"));
    m.def("temporal_distance_oracle", &maze::temporal_distance_oracle, py::arg("spec"), py::arg("a"), py::arg("b"));
    m.def("generate_stitch_dataset", &maze::generate_stitch_dataset, py::arg("spec"), py::arg("n_episodes"),
          py::arg("max_span"), py::arg("ep_len"), py::arg("seed"));
    m.def("generate_explore_dataset", &maze::generate_explore_dataset, py::arg("spec"), py::arg("n_episodes"),
          py::arg("ep_len"), py::arg("resample_interval"), py::arg("noise_prob"), py::arg("seed"));
    m.def("is_success", &maze::is_success, py::arg("s"), py::arg("g"), py::arg("delta_g"));
    m.def("builtin_maze", &maze::builtin_maze, py::arg("name"));
    m.def("open_maze", &maze::open_maze, py::arg("interior_w"), py::arg("interior_h"), py::arg("cell_size") = 1.0);
    m.def("parse_maze_text", &maze::parse_maze_text);
    m.def("maze_to_text", &maze::maze_to_text);
    m.def("load_maze", &maze::load_maze);
    m.def("save_dataset", &maze::save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("load_dataset", &maze::load_dataset, py::arg("path"));

    // --- embedding --------------------------------------------------------
    py::class_<embed::EmbeddingModel>(m, "EmbeddingModel")
        .def_property_readonly("latent_dim", &embed::EmbeddingModel::latent_dim)
        .def("embed", &embed::EmbeddingModel::embed, py::arg("raw_states"))
        .def("embed_state", &embed::EmbeddingModel::embed_state, py::arg("s"));

    py::class_<embed::EmbedTrainConfig>(m, "EmbedTrainConfig")
        .def(py::init<>())
        .def_readwrite("gamma", &embed::EmbedTrainConfig::gamma)
        .def_readwrite("xi", &embed::EmbedTrainConfig::xi)
        .def_readwrite("batch_size", &embed::EmbedTrainConfig::batch_size)
        .def_readwrite("train_steps", &embed::EmbedTrainConfig::train_steps)
        .def_readwrite("polyak", &embed::EmbedTrainConfig::polyak)
        .def_readwrite("hidden", &embed::EmbedTrainConfig::hidden)
        .def_readwrite("latent_dim", &embed::EmbedTrainConfig::latent_dim)
        .def_readwrite("lr", &embed::EmbedTrainConfig::lr)
        .def_readwrite("seed", &embed::EmbedTrainConfig::seed);

    m.def("value", &embed::value, py::arg("model"), py::arg("s"), py::arg("g"));
    m.def("expectile_loss", &embed::expectile_loss, py::arg("u"), py::arg("xi"));
    m.def("train_embedding", &embed::train_embedding, py::arg("data"), py::arg("config"),
          py::arg("logger") = nullptr);
    m.def("spearman_rho", &embed::spearman_rho);
    m.def("rank_quality", &embed::rank_quality, py::arg("model"), py::arg("spec"), py::arg("n_pairs"), py::arg("rng"));
    m.def("save_embedding", &embed::save_embedding);
    m.def("load_embedding", &embed::load_embedding);

    // --- diffusion ----------------------------------------------------------
    py::enum_<diffusion::ScheduleKind>(m, "ScheduleKind")
        .value("linear", diffusion::ScheduleKind::linear)
        .value("cosine", diffusion::ScheduleKind::cosine);

    py::class_<diffusion::DiffusionSchedule>(m, "DiffusionSchedule")
        .def_readonly("steps", &diffusion::DiffusionSchedule::steps)
        .def_readonly("betas", &diffusion::DiffusionSchedule::betas)
        .def_readonly("alphas_bar", &diffusion::DiffusionSchedule::alphas_bar)
        .def_readonly("posterior_var", &diffusion::DiffusionSchedule::posterior_var);
    m.def("make_schedule", &diffusion::make_schedule, py::arg("steps"),
          py::arg("kind") = diffusion::ScheduleKind::cosine);
    m.def("q_sample", &diffusion::q_sample, py::arg("schedule"), py::arg("tau0"), py::arg("i"), py::arg("eps"));

    py::class_<diffusion::Clamp>(m, "Clamp")
        .def(py::init([](int index, Eigen::VectorXd value) {
                 diffusion::Clamp c;
                 c.index = index;
                 c.value = std::move(value);
                 return c;
             }),
             py::arg("index"), py::arg("value"))
        .def_readwrite("index", &diffusion::Clamp::index)
        .def_readwrite("value", &diffusion::Clamp::value);

    py::class_<diffusion::NoiseModel>(m, "NoiseModel")
        .def_readonly("horizon", &diffusion::NoiseModel::horizon)
        .def_readonly("state_dim", &diffusion::NoiseModel::state_dim)
        .def_readonly("jump", &diffusion::NoiseModel::jump)
        .def_readwrite("trained", &diffusion::NoiseModel::trained)
        .def_property_readonly("schedule", [](const diffusion::NoiseModel& nm) { return nm.schedule; });

    py::class_<diffusion::DiffTrainConfig>(m, "DiffTrainConfig")
        .def(py::init<>())
        .def_readwrite("diffusion_steps", &diffusion::DiffTrainConfig::diffusion_steps)
        .def_readwrite("kind", &diffusion::DiffTrainConfig::kind)
        .def_readwrite("hidden", &diffusion::DiffTrainConfig::hidden)
        .def_readwrite("lr", &diffusion::DiffTrainConfig::lr)
        .def_readwrite("weight_decay", &diffusion::DiffTrainConfig::weight_decay)
        .def_readwrite("batch_size", &diffusion::DiffTrainConfig::batch_size)
        .def_readwrite("train_steps", &diffusion::DiffTrainConfig::train_steps)
        .def_readwrite("horizon", &diffusion::DiffTrainConfig::horizon)
        .def_readwrite("jump", &diffusion::DiffTrainConfig::jump)
        .def_readwrite("seed", &diffusion::DiffTrainConfig::seed);

    py::class_<diffusion::DiffusionTrainer>(m, "DiffusionTrainer")
        .def(py::init<const maze::Dataset&, const diffusion::DiffTrainConfig&>(), py::arg("data"), py::arg("config"),
             py::keep_alive<1, 2>())
        .def("train_step", &diffusion::DiffusionTrainer::train_step, py::call_guard<py::gil_scoped_release>())
        .def("model", &diffusion::DiffusionTrainer::model, py::return_value_policy::copy)
        .def_property_readonly("step", &diffusion::DiffusionTrainer::step);

    m.def("ddpm_sample", &diffusion::ddpm_sample, py::arg("model"), py::arg("rng"),
          py::arg("cond") = diffusion::CondSpec{}, py::call_guard<py::gil_scoped_release>());
    m.def("ddim_sample", &diffusion::ddim_sample, py::arg("model"), py::arg("n_steps"), py::arg("rng"),
          py::arg("cond") = diffusion::CondSpec{}, py::call_guard<py::gil_scoped_release>());
    m.def("save_noise_model", &diffusion::save_noise_model);
    m.def("load_noise_model", &diffusion::load_noise_model);

    // --- segment index -------------------------------------------------------
    py::class_<ivf::SegmentRecord>(m, "SegmentRecord")
        .def_readonly("id", &ivf::SegmentRecord::id)
        .def_readonly("traj_id", &ivf::SegmentRecord::traj_id)
        .def_readonly("start_offset", &ivf::SegmentRecord::start_offset)
        .def_readonly("length", &ivf::SegmentRecord::length)
        .def_readonly("start_state", &ivf::SegmentRecord::start_state)
        .def_readonly("end_state", &ivf::SegmentRecord::end_state)
        .def_readonly("phi_start", &ivf::SegmentRecord::phi_start)
        .def_readonly("phi_end", &ivf::SegmentRecord::phi_end);

    py::class_<ivf::IVFIndex>(m, "IVFIndex")
        .def_readonly("n_list", &ivf::IVFIndex::n_list)
        .def_readonly("latent_dim", &ivf::IVFIndex::latent_dim)
        .def_readwrite("default_n_probe", &ivf::IVFIndex::default_n_probe)
        .def_property_readonly("count", &ivf::IVFIndex::count);

    py::class_<ivf::Hit>(m, "Hit")
        .def_readonly("id", &ivf::Hit::id)
        .def_readonly("dist", &ivf::Hit::dist);

    m.def("extract_segments",
          [](const maze::Dataset& data, const embed::EmbeddingModel& model, int h_seg, int stride) {
              return ivf::extract_segments(data, model, h_seg, stride);
          },
          py::arg("data"), py::arg("model"), py::arg("h_seg"), py::arg("stride"));
    m.def("segment_keys", &ivf::segment_keys);
    m.def("build_ivf", &ivf::build_ivf, py::arg("keys"), py::arg("n_list"), py::arg("seed"));
    m.def("topk", &ivf::topk, py::arg("index"), py::arg("query"), py::arg("k"), py::arg("n_probe") = 0);
    m.def("brute_topk", &ivf::brute_topk, py::arg("keys"), py::arg("query"), py::arg("k"));

    // --- stitching -------------------------------------------------------------
    py::class_<stitch::StitchConfig>(m, "StitchConfig")
        .def(py::init<>())
        .def_readwrite("k", &stitch::StitchConfig::k)
        .def_readwrite("k_density", &stitch::StitchConfig::k_density)
        .def_readwrite("beta", &stitch::StitchConfig::beta)
        .def_readwrite("n_stitch", &stitch::StitchConfig::n_stitch)
        .def_readwrite("n_traj", &stitch::StitchConfig::n_traj)
        .def_readwrite("h_stitcher", &stitch::StitchConfig::h_stitcher)
        .def_readwrite("seed", &stitch::StitchConfig::seed);

    py::class_<stitch::InverseDynamicsModel>(m, "InverseDynamicsModel")
        .def("predict", &stitch::InverseDynamicsModel::predict, py::arg("s"), py::arg("s_next"));

    py::class_<stitch::InvDynTrainConfig>(m, "InvDynTrainConfig")
        .def(py::init<>())
        .def_readwrite("hidden", &stitch::InvDynTrainConfig::hidden)
        .def_readwrite("lr", &stitch::InvDynTrainConfig::lr)
        .def_readwrite("batch_size", &stitch::InvDynTrainConfig::batch_size)
        .def_readwrite("train_steps", &stitch::InvDynTrainConfig::train_steps)
        .def_readwrite("seed", &stitch::InvDynTrainConfig::seed);

    m.def("sample_direction", &stitch::sample_direction, py::arg("latent_dim"), py::arg("rng"));
    m.def("progress_score", &stitch::progress_score, py::arg("segment"), py::arg("z"));
    m.def("novelty_score", &stitch::novelty_score, py::arg("candidate_end_latent"), py::arg("v_rollout"),
          py::arg("k_density"));
    m.def("combined_score", &stitch::combined_score, py::arg("progress"), py::arg("novelty"), py::arg("beta"));
    m.def("train_inverse_dynamics", &stitch::train_inverse_dynamics, py::arg("data"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("infer_actions", &stitch::infer_actions, py::arg("f_psi"), py::arg("states"));
    m.def("refine_bridge", &stitch::refine_bridge, py::arg("stitcher"), py::arg("start"), py::arg("end"),
          py::arg("rng"), py::arg("ddim_steps") = 20);
    m.def("save_inverse_dynamics", &stitch::save_inverse_dynamics);
    m.def("load_inverse_dynamics", &stitch::load_inverse_dynamics);

    py::class_<AugmentEngine>(m, "AugmentEngine")
        .def(py::init<maze::Dataset, embed::EmbeddingModel, diffusion::NoiseModel, stitch::InverseDynamicsModel, int,
                      int, int, std::uint64_t>(),
             py::arg("data"), py::arg("phi"), py::arg("stitcher"), py::arg("f_psi"), py::arg("h_seg") = 26,
             py::arg("stride") = 13, py::arg("n_list") = 0, py::arg("seed") = 0)
        .def_property_readonly("segment_count",
                               [](const AugmentEngine& e) { return static_cast<std::int64_t>(e.segments.size()); })
        .def("run_rollout",
             [](const AugmentEngine& e, const stitch::StitchConfig& cfg, std::uint64_t rollout_seed) {
                 auto ctx = e.context();
                 return stitch::run_rollout(ctx, cfg, rollout_seed);
             },
             py::arg("config"), py::arg("rollout_seed"), py::call_guard<py::gil_scoped_release>())
        .def("augment",
             [](const AugmentEngine& e, const stitch::StitchConfig& cfg, int threads) {
                 auto ctx = e.context();
                 return stitch::augment_dataset(ctx, cfg, threads);
             },
             py::arg("config"), py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());

    // --- planning ---------------------------------------------------------------
    py::class_<planner::PlannerConfig>(m, "PlannerConfig")
        .def(py::init<>())
        .def_readwrite("plan_horizon", &planner::PlannerConfig::plan_horizon)
        .def_readwrite("temporal_jump", &planner::PlannerConfig::temporal_jump)
        .def_readwrite("replanning_interval", &planner::PlannerConfig::replanning_interval)
        .def_readwrite("subgoal_horizon", &planner::PlannerConfig::subgoal_horizon)
        .def_readwrite("max_episode_steps", &planner::PlannerConfig::max_episode_steps)
        .def_readwrite("delta_g", &planner::PlannerConfig::delta_g)
        .def_readwrite("ddim_steps", &planner::PlannerConfig::ddim_steps)
        .def_property_readonly("num_waypoints", &planner::PlannerConfig::num_waypoints);

    py::class_<planner::Plan>(m, "Plan")
        .def_readonly("states", &planner::Plan::states)
        .def_readonly("waypoint_indices", &planner::Plan::waypoint_indices);

    py::class_<planner::Task>(m, "Task")
        .def(py::init([](maze::Cell start, maze::Cell goal) { return planner::Task{start, goal}; }),
             py::arg("start"), py::arg("goal"))
        .def_readwrite("start", &planner::Task::start)
        .def_readwrite("goal", &planner::Task::goal);

    py::class_<planner::EpisodeOutcome>(m, "EpisodeOutcome")
        .def_readonly("success", &planner::EpisodeOutcome::success)
        .def_readonly("steps", &planner::EpisodeOutcome::steps)
        .def_readonly("trace", &planner::EpisodeOutcome::trace);

    m.def("plan",
          [](const diffusion::NoiseModel& high, const diffusion::NoiseModel& stitcher, const maze::EnvState& current,
             const maze::EnvState& goal, const planner::PlannerConfig& config, Rng& rng) {
              return planner::plan(high, stitcher, current, goal, config, rng);
          },
          py::arg("high_model"), py::arg("stitcher"), py::arg("current"), py::arg("goal"), py::arg("config"),
          py::arg("rng"), py::call_guard<py::gil_scoped_release>());
    m.def("low_level_act", &planner::low_level_act, py::arg("phi"), py::arg("spec"), py::arg("s"), py::arg("subgoal"));
    m.def("dynamic_mse", &planner::dynamic_mse, py::arg("spec"), py::arg("s"), py::arg("a"), py::arg("s_next"));
    m.def("feasibility_mse", &planner::feasibility_mse, py::arg("spec"), py::arg("from_state"), py::arg("to_state"));
    m.def("coverage", &planner::coverage, py::arg("trajectories"), py::arg("spec"));
    m.def("rollout_episode",
          [](const maze::MazeSpec& spec, const embed::EmbeddingModel& phi, const diffusion::NoiseModel& high,
             const diffusion::NoiseModel& stitcher, const planner::Task& task, const planner::PlannerConfig& config,
             std::uint64_t seed) {
              planner::PlannerModels models;
              models.phi = &phi;
              models.high_model = &high;
              models.stitcher = &stitcher;
              return planner::rollout_episode(spec, models, task, config, seed);
          },
          py::arg("spec"), py::arg("phi"), py::arg("high_model"), py::arg("stitcher"), py::arg("task"),
          py::arg("config"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
    m.def("make_task_catalog", &planner::make_task_catalog, py::arg("spec"), py::arg("count"), py::arg("min_d"),
          py::arg("max_d"), py::arg("seed"));
}
