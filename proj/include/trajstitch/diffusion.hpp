#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajstitch/maze.hpp"
#include "trajstitch/nn.hpp"
#include "trajstitch/normalizer.hpp"

namespace trajstitch::diffusion {

enum class ScheduleKind { linear, cosine };

std::string schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(const std::string& name);

struct DiffusionSchedule {
    int steps = 0;  // M
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<double> betas;          // betas[i-1] = beta_i, i in 1..M
    std::vector<double> alphas_bar;     // alphas_bar[i], i in 0..M; [0] == 1
    std::vector<double> posterior_var;  // posterior_var[i-1] = sigma_i^2

    double beta(int i) const { return betas[static_cast<size_t>(i - 1)]; }
    double abar(int i) const { return alphas_bar[static_cast<size_t>(i)]; }
};

DiffusionSchedule make_schedule(int steps, ScheduleKind kind = ScheduleKind::cosine);

// Closed-form forward noising: sqrt(abar_i) * tau0 + sqrt(1 - abar_i) * eps.
nn::Matrix q_sample(const DiffusionSchedule& schedule, const nn::Matrix& tau0, int i, const nn::Matrix& eps);

// Boundary clamp in raw (denormalized) coordinates; row index is 0-based.
struct Clamp {
    int index = 0;
    Eigen::VectorXd value;
};
using CondSpec = std::vector<Clamp>;

// Noise-prediction MLP over fixed-horizon state sequences. Input is the
// flattened normalized sequence concatenated with a sinusoidal embedding of
// the diffusion timestep.
struct NoiseModel {
    nn::MLPSpec spec;
    nn::ParamSet params;
    DiffusionSchedule schedule;
    int horizon = 0;
    int state_dim = 0;
    int jump = 1;  // stride between sequence entries in source trajectories
    int time_dim = 32;
    Normalizer normalizer;
    bool trained = false;

    // eps_theta(tau_i, i) for one normalized H x D sequence.
    nn::Matrix predict_noise(const nn::Matrix& tau_normed, int i) const;
};

Eigen::VectorXd timestep_embedding(int i, int dim);

// Mean over the batch of ||eps - eps_theta(q_sample(tau0, i, eps), i)||^2
// with i ~ U{1..M}. `taus_raw` holds raw-coordinate H x D sequences. When
// grads is non-null the parameter gradients are accumulated there.
double noise_loss(const NoiseModel& model, const std::vector<nn::Matrix>& taus_raw, Rng& rng,
                  std::vector<double>* grads = nullptr);

// Ancestral DDPM sampling with replacement inpainting: after every reverse
// step, clamped rows are overwritten with q_sample of the clamp at the new
// noise level; the final output carries the exact raw clamp values.
nn::Matrix ddpm_sample(const NoiseModel& model, Rng& rng, const CondSpec& cond = {});

// Deterministic (eta = 0) DDIM over an evenly strided timestep subsequence;
// same conditioning contract as ddpm_sample.
nn::Matrix ddim_sample(const NoiseModel& model, int n_steps, Rng& rng, const CondSpec& cond = {});

struct DiffTrainConfig {
    int diffusion_steps = 1000;  // M
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<int> hidden = {256, 256, 256};
    double lr = 2e-4;
    double weight_decay = 1e-5;
    int batch_size = 64;
    std::int64_t train_steps = 20000;
    int horizon = 26;
    int jump = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

class DiffusionTrainer {
  public:
    DiffusionTrainer(const maze::Dataset& data, const DiffTrainConfig& config);

    double train_step();
    const NoiseModel& model() const { return model_; }
    std::int64_t step() const { return step_; }

    std::string serialize_state() const;
    void restore_state(const std::string& blob);

  private:
    nn::Matrix sample_window(Rng& rng) const;

    const maze::Dataset& data_;
    DiffTrainConfig config_;
    NoiseModel model_;
    nn::AdamState adam_;
    Rng rng_;
    std::int64_t step_ = 0;
    std::vector<int> usable_trajs_;  // indices with enough states for one window
};

void save_noise_model(const NoiseModel& model, const std::string& path);
NoiseModel load_noise_model(const std::string& path);

}  // namespace trajstitch::diffusion
