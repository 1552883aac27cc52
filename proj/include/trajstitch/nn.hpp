#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "trajstitch/rng.hpp"

namespace trajstitch::nn {

using Matrix = Eigen::MatrixXd;  // rows = batch, cols = features

enum class Activation { gelu, relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MLPSpec {
    std::vector<int> layer_dims;  // input, hidden..., output
    Activation activation = Activation::gelu;

    int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::int64_t param_count() const;
    void validate() const;  // >= 1 hidden layer, all widths >= 1
};

// Flat parameter vector; per layer l the block is W_l (out x in, row-major)
// followed by b_l (out).
struct ParamSet {
    std::vector<double> values;
    std::string init_scheme = "kaiming_uniform";
};

// Kaiming-uniform weights (limit sqrt(6/fan_in)), zero biases. Each layer
// draws from its own stream mix_seed(seed, layer).
ParamSet init_params(const MLPSpec& spec, std::uint64_t seed);

Matrix forward(const MLPSpec& spec, const ParamSet& params, const Matrix& batch);

// Cached intermediate values for one forward pass, reused by backward.
struct ForwardTrace {
    std::vector<Matrix> activations;     // a_0 = input, ..., a_L = output
    std::vector<Matrix> preactivations;  // z_l per layer
    const Matrix& output() const { return activations.back(); }
};

ForwardTrace forward_trace(const MLPSpec& spec, const ParamSet& params, const Matrix& batch);

struct Gradients {
    std::vector<double> params;  // same layout as ParamSet::values
    Matrix inputs;               // d loss / d batch
};

Gradients backward_from_trace(const MLPSpec& spec, const ParamSet& params, const ForwardTrace& trace,
                              const Matrix& upstream_grad);
// Convenience: runs its own forward pass first.
Gradients backward(const MLPSpec& spec, const ParamSet& params, const Matrix& batch, const Matrix& upstream_grad);

struct AdamState {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step_count = 0;
};

AdamState make_adam(std::int64_t param_count, double lr);

// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, ParamSet& params, const std::vector<double>& grads);

// Parameter file: one JSON header line, then raw little-endian float64.
void save_params(const MLPSpec& spec, const ParamSet& params, const std::string& path);
std::pair<MLPSpec, ParamSet> load_params(const std::string& path);

// Stream variants used by larger checkpoint files.
void write_params_blob(std::string& out, const MLPSpec& spec, const ParamSet& params);
std::pair<MLPSpec, ParamSet> read_params_blob(const std::string& blob, size_t& offset);

}  // namespace trajstitch::nn
