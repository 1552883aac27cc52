#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajstitch/diffusion.hpp"
#include "trajstitch/embedding.hpp"
#include "trajstitch/maze.hpp"
#include "trajstitch/segment_index.hpp"

namespace trajstitch::stitch {

struct StitchConfig {
    int k = 10;             // retrieved candidates per iteration
    int k_density = 30;     // neighbors in the novelty estimate
    double beta = 2.0;      // novelty weight
    int n_stitch = 10;      // stitch iterations per rollout
    int n_traj = 100;       // rollouts per augmented dataset
    int h_stitcher = 26;    // bridge horizon (states)
    std::uint64_t seed = 0;

    void validate() const;
};

// Unit-norm latent exploration direction, z ~ N(0, I) normalized.
Eigen::VectorXd sample_direction(int latent_dim, Rng& rng);

// <phi(end) - phi(start), z> from the record's cached endpoint latents.
double progress_score(const ivf::SegmentRecord& segment, const Eigen::VectorXd& z);

// Mean distance from the candidate latent to its min(k_density, |visited|)
// nearest visited latents; 0 when nothing has been visited yet.
double novelty_score(const Eigen::VectorXd& candidate_end_latent, const std::vector<Eigen::VectorXd>& v_rollout,
                     int k_density);

inline double combined_score(double progress, double novelty, double beta) { return progress + beta * novelty; }

// Index into `candidate_ids` of the argmax score; ties resolved toward the
// smaller record id.
size_t select_best(const std::vector<std::int64_t>& candidate_ids, const std::vector<double>& scores);

// DDIM-inpainted bridge of h states with both endpoints clamped exactly.
maze::Trajectory refine_bridge(const diffusion::NoiseModel& stitcher, const maze::EnvState& start,
                               const maze::EnvState& end, Rng& rng, int ddim_steps = 20);

// Discrete-action inverse dynamics: (s_t, s_{t+1}) -> logits over 9 actions.
struct InverseDynamicsModel {
    nn::MLPSpec spec;  // [4, hidden..., 9]
    nn::ParamSet params;
    Normalizer normalizer;  // 2 dims, applied to both states

    nn::Matrix logits(const nn::Matrix& pairs_raw) const;  // B x 4 -> B x 9
    maze::ActionId predict(const maze::EnvState& s, const maze::EnvState& s_next) const;
};

struct InvDynTrainConfig {
    std::vector<int> hidden = {128, 128, 128};
    double lr = 3e-4;
    int batch_size = 256;
    std::int64_t train_steps = 8000;
    std::uint64_t seed = 0;
};

class InvDynTrainer {
  public:
    InvDynTrainer(const maze::Dataset& data, const InvDynTrainConfig& config);
    double train_step();  // cross-entropy on a sampled transition batch
    const InverseDynamicsModel& model() const { return model_; }
    std::int64_t step() const { return step_; }
    std::string serialize_state() const;
    void restore_state(const std::string& blob);

  private:
    const maze::Dataset& data_;
    InvDynTrainConfig config_;
    InverseDynamicsModel model_;
    nn::AdamState adam_;
    Rng rng_;
    std::int64_t step_ = 0;
};

InverseDynamicsModel train_inverse_dynamics(const maze::Dataset& data, const InvDynTrainConfig& config);

// Argmax action per consecutive pair; final action is stay.
std::vector<maze::ActionId> infer_actions(const InverseDynamicsModel& f_psi, const std::vector<maze::EnvState>& states);

void save_inverse_dynamics(const InverseDynamicsModel& model, const std::string& path);
InverseDynamicsModel load_inverse_dynamics(const std::string& path);

// Everything a rollout needs; all referenced objects are immutable during
// augmentation, so rollouts can run on parallel threads.
struct StitchContext {
    const maze::Dataset* data = nullptr;
    const std::vector<ivf::SegmentRecord>* segments = nullptr;
    const ivf::IVFIndex* index = nullptr;
    const embed::EmbeddingModel* phi = nullptr;
    const diffusion::NoiseModel* stitcher = nullptr;
    const InverseDynamicsModel* f_psi = nullptr;
};

// Per-junction diagnostics collected during a rollout.
struct JunctionStats {
    std::int64_t selected_id = 0;
    double raw_gap = 0.0;      // latent distance from query to the selected key
    double progress = 0.0;
    double novelty = 0.0;
    double score = 0.0;
};

struct RolloutStats {
    std::vector<JunctionStats> junctions;
    // first post-junction transition of each stitch, before/after refinement
    std::vector<std::pair<maze::EnvState, maze::EnvState>> refined_transitions;
    std::vector<std::pair<maze::EnvState, maze::EnvState>> raw_transitions;
};

maze::Trajectory run_rollout(const StitchContext& ctx, const StitchConfig& config, std::uint64_t rollout_seed,
                             RolloutStats* stats = nullptr);

// N_traj rollouts with per-rollout seeds mix_seed(seed, n), merged in rollout
// order. `extra_meta` is copied into the output dataset meta (provenance).
maze::Dataset augment_dataset(const StitchContext& ctx, const StitchConfig& config, int threads = 1,
                              const json& extra_meta = json::object());

}  // namespace trajstitch::stitch
