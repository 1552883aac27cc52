#include "trajstitch/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

namespace trajstitch::nn {

namespace {

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Offset of layer l's weight block in the flat vector.
std::int64_t layer_offset(const MLPSpec& spec, int layer) {
    std::int64_t off = 0;
    for (int l = 0; l < layer; ++l) off += static_cast<std::int64_t>(spec.layer_dims[l] + 1) * spec.layer_dims[l + 1];
    return off;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void apply_activation(Activation act, Matrix& m) {
    if (act == Activation::relu) {
        m = m.cwiseMax(0.0);
    } else {
        m = m.unaryExpr([](double x) { return gelu(x); });
    }
}

Matrix activation_grad(Activation act, const Matrix& z) {
    if (act == Activation::relu) {
        return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    }
    return z.unaryExpr([](double x) { return gelu_grad(x); });
}

}  // namespace

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "gelu") return Activation::gelu;
    throw ConfigError("unknown activation: " + name);
}

std::int64_t MLPSpec::param_count() const { return layer_offset(*this, num_layers()); }

void MLPSpec::validate() const {
    if (layer_dims.size() < 3) throw ConfigError("MLP needs at least one hidden layer");
    for (int d : layer_dims)
        if (d < 1) throw ConfigError("MLP layer widths must be >= 1");
}

ParamSet init_params(const MLPSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamSet p;
    p.values.assign(static_cast<size_t>(spec.param_count()), 0.0);
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int fan_in = spec.layer_dims[l];
        const int fan_out = spec.layer_dims[l + 1];
        const double limit = std::sqrt(6.0 / fan_in);
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(l)));
        double* w = p.values.data() + layer_offset(spec, l);
        for (int i = 0; i < fan_in * fan_out; ++i) w[i] = rng.uniform(-limit, limit);
        // biases stay zero
    }
    return p;
}

Matrix forward(const MLPSpec& spec, const ParamSet& params, const Matrix& batch) {
    spec.validate();
    if (batch.cols() != spec.input_dim()) throw Error("forward: batch width != input dim");
    if (static_cast<std::int64_t>(params.values.size()) != spec.param_count()) throw Error("forward: param count mismatch");
    Matrix a = batch;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int in = spec.layer_dims[l];
        const int out = spec.layer_dims[l + 1];
        const double* base = params.values.data() + layer_offset(spec, l);
        ConstRowMajorMap w(base, out, in);
        ConstVecMap b(base + static_cast<std::int64_t>(in) * out, out);
        Matrix z = a * w.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 < spec.num_layers()) apply_activation(spec.activation, z);
        a = std::move(z);
    }
    return a;
}

ForwardTrace forward_trace(const MLPSpec& spec, const ParamSet& params, const Matrix& batch) {
    spec.validate();
    if (batch.cols() != spec.input_dim()) throw Error("forward_trace: batch width != input dim");
    ForwardTrace trace;
    trace.activations.push_back(batch);
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int in = spec.layer_dims[l];
        const int out = spec.layer_dims[l + 1];
        const double* base = params.values.data() + layer_offset(spec, l);
        ConstRowMajorMap w(base, out, in);
        ConstVecMap b(base + static_cast<std::int64_t>(in) * out, out);
        Matrix z = trace.activations.back() * w.transpose();
        z.rowwise() += b.transpose();
        trace.preactivations.push_back(z);
        if (l + 1 < spec.num_layers()) apply_activation(spec.activation, z);
        trace.activations.push_back(std::move(z));
    }
    return trace;
}

Gradients backward_from_trace(const MLPSpec& spec, const ParamSet& params, const ForwardTrace& trace,
                              const Matrix& upstream_grad) {
    const int L = spec.num_layers();
    if (upstream_grad.rows() != trace.output().rows() || upstream_grad.cols() != trace.output().cols())
        throw Error("backward: upstream shape mismatch");
    Gradients g;
    g.params.assign(static_cast<size_t>(spec.param_count()), 0.0);
    Matrix delta = upstream_grad;  // gradient wrt z_{L-1} (output layer is linear)
    for (int l = L - 1; l >= 0; --l) {
        const int in = spec.layer_dims[l];
        const int out = spec.layer_dims[l + 1];
        const double* base = params.values.data() + layer_offset(spec, l);
        ConstRowMajorMap w(base, out, in);
        double* gbase = g.params.data() + layer_offset(spec, l);
        RowMajorMap gw(gbase, out, in);
        VecMap gb(gbase + static_cast<std::int64_t>(in) * out, out);
        gw = delta.transpose() * trace.activations[l];
        gb = delta.colwise().sum().transpose();
        Matrix da = delta * w;  // gradient wrt a_l
        if (l > 0) {
            delta = da.cwiseProduct(activation_grad(spec.activation, trace.preactivations[l - 1]));
        } else {
            g.inputs = std::move(da);
        }
    }
    return g;
}

Gradients backward(const MLPSpec& spec, const ParamSet& params, const Matrix& batch, const Matrix& upstream_grad) {
    return backward_from_trace(spec, params, forward_trace(spec, params, batch), upstream_grad);
}

AdamState make_adam(std::int64_t param_count, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.assign(static_cast<size_t>(param_count), 0.0);
    s.v.assign(static_cast<size_t>(param_count), 0.0);
    return s;
}

void adam_step(AdamState& state, ParamSet& params, const std::vector<double>& grads) {
    if (grads.size() != params.values.size() || state.m.size() != params.values.size())
        throw Error("adam_step: size mismatch");
    state.step_count += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < grads.size(); ++i) {
        const double gi = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * gi;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * gi * gi;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

namespace {

constexpr int kParamsFormatVersion = 1;

json spec_to_json(const MLPSpec& spec) {
    return json{{"layer_dims", spec.layer_dims}, {"activation", activation_name(spec.activation)}};
}

MLPSpec spec_from_json(const json& j) {
    MLPSpec spec;
    spec.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    spec.activation = activation_from_name(j.at("activation").get<std::string>());
    spec.validate();
    return spec;
}

}  // namespace

void write_params_blob(std::string& out, const MLPSpec& spec, const ParamSet& params) {
    json header{{"format_version", kParamsFormatVersion},
                {"spec", spec_to_json(spec)},
                {"init_scheme", params.init_scheme},
                {"count", params.values.size()}};
    out += dump_json(header);
    out += '\n';
    const size_t bytes = params.values.size() * sizeof(double);
    const size_t pos = out.size();
    out.resize(pos + bytes);
    std::memcpy(out.data() + pos, params.values.data(), bytes);
}

std::pair<MLPSpec, ParamSet> read_params_blob(const std::string& blob, size_t& offset) {
    const size_t nl = blob.find('\n', offset);
    if (nl == std::string::npos) throw IoError("params blob: missing header line");
    const json header = parse_json(blob.substr(offset, nl - offset));
    if (header.value("format_version", -1) != kParamsFormatVersion) throw IoError("params blob: format_version mismatch");
    MLPSpec spec = spec_from_json(header.at("spec"));
    const size_t count = header.at("count").get<size_t>();
    if (count != static_cast<size_t>(spec.param_count())) throw IoError("params blob: count does not match spec");
    const size_t bytes = count * sizeof(double);
    if (blob.size() < nl + 1 + bytes) throw IoError("params blob: truncated payload");
    ParamSet params;
    params.init_scheme = header.value("init_scheme", "kaiming_uniform");
    params.values.resize(count);
    std::memcpy(params.values.data(), blob.data() + nl + 1, bytes);
    offset = nl + 1 + bytes;
    return {std::move(spec), std::move(params)};
}

void save_params(const MLPSpec& spec, const ParamSet& params, const std::string& path) {
    std::string out;
    write_params_blob(out, spec, params);
    write_file(path, out);
}

std::pair<MLPSpec, ParamSet> load_params(const std::string& path) {
    const std::string blob = read_file(path);
    size_t offset = 0;
    auto result = read_params_blob(blob, offset);
    if (offset != blob.size()) throw IoError("params file: trailing bytes in " + path);
    return result;
}

}  // namespace trajstitch::nn
