#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trajstitch/maze.hpp"
#include "trajstitch/nn.hpp"
#include "trajstitch/normalizer.hpp"

namespace trajstitch::embed {

// State -> latent map whose Euclidean geometry approximates temporal
// distance. Input states are scaled by the stored normalizer before the MLP.
struct EmbeddingModel {
    nn::MLPSpec spec;      // [2, hidden..., latent_dim]
    nn::ParamSet params;
    Normalizer normalizer;  // 2 dims

    int latent_dim() const { return spec.output_dim(); }

    // raw states, one per row -> latents, one per row
    nn::Matrix embed(const nn::Matrix& raw_states) const;
    Eigen::VectorXd embed_state(const maze::EnvState& s) const;
};

struct GoalMix {
    double p_hindsight = 0.8;
    double p_random = 0.2;
    double geometric_p = 0.1;
};

struct EmbedTrainConfig {
    double gamma = 0.99;
    double xi = 0.95;
    int batch_size = 256;
    std::int64_t train_steps = 20000;
    double polyak = 0.005;
    GoalMix goal_mix;
    double equal_threshold = -1.0;  // < 0: use 0.5 * cell_size
    std::vector<int> hidden = {128, 128, 128};
    int latent_dim = 32;
    double lr = 3e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

// V(s, g) = -||phi(s) - phi(g)||, always <= 0.
double value(const EmbeddingModel& model, const maze::EnvState& s, const maze::EnvState& g);

// Asymmetric squared loss |xi - 1(u < 0)| * u^2.
double expectile_loss(double u, double xi);

struct TrainTuple {
    maze::EnvState s;
    maze::EnvState s_next;
    maze::EnvState g;
};

TrainTuple sample_training_tuple(const maze::Dataset& data, const EmbedTrainConfig& config, Rng& rng);

// Incremental trainer; holds target network, optimizer and sampling stream so
// interrupted runs can resume exactly.
class EmbedTrainer {
  public:
    EmbedTrainer(const maze::Dataset& data, const EmbedTrainConfig& config);

    // One TD step on a freshly sampled batch: returns the batch loss.
    double train_step();
    // Loss for an explicit batch + parameter update (exposed for tests).
    double td_train_step(const std::vector<TrainTuple>& batch);

    const EmbeddingModel& model() const { return model_; }
    const nn::ParamSet& target_params() const { return target_; }
    std::int64_t step() const { return step_; }
    double equal_threshold() const { return equal_threshold_; }

    std::string serialize_state() const;
    void restore_state(const std::string& blob);

  private:
    const maze::Dataset& data_;
    EmbedTrainConfig config_;
    double equal_threshold_;
    EmbeddingModel model_;
    nn::ParamSet target_;
    nn::AdamState adam_;
    Rng rng_;
    std::int64_t step_ = 0;
};

using LossLogger = std::function<void(std::int64_t step, double loss)>;

EmbeddingModel train_embedding(const maze::Dataset& data, const EmbedTrainConfig& config,
                               const LossLogger& logger = nullptr);

// Spearman rank correlation (average ranks for ties).
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

// Correlation between latent distance and BFS temporal distance over n_pairs
// uniformly sampled mutually reachable free-cell pairs.
double rank_quality(const EmbeddingModel& model, const maze::MazeSpec& spec, int n_pairs, Rng& rng);

// Checkpoint: nn params file at `path` plus a `<path>.meta.json` sidecar with
// latent_dim / gamma / xi / normalizer.
void save_embedding(const EmbeddingModel& model, double gamma, double xi, const std::string& path);
EmbeddingModel load_embedding(const std::string& path);

}  // namespace trajstitch::embed
