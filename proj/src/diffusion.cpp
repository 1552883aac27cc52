#include "trajstitch/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "trajstitch/blobio.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"

namespace trajstitch::diffusion {

std::string schedule_kind_name(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "linear") return ScheduleKind::linear;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind: " + name);
}

DiffusionSchedule make_schedule(int steps, ScheduleKind kind) {
    if (steps < 1) throw ConfigError("schedule needs at least 1 step");
    DiffusionSchedule s;
    s.steps = steps;
    s.kind = kind;
    s.betas.resize(static_cast<size_t>(steps));
    if (kind == ScheduleKind::linear) {
        const double lo = 1e-4, hi = 2e-2;
        for (int i = 0; i < steps; ++i)
            s.betas[static_cast<size_t>(i)] = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
    } else {
        // squared-cosine profile for alpha_bar, betas from consecutive ratios
        const double off = 0.008;
        auto f = [&](double i) {
            const double v = std::cos((i / steps + off) / (1.0 + off) * M_PI / 2.0);
            return v * v;
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (int i = 1; i <= steps; ++i) {
            const double cur = f(static_cast<double>(i)) / f0;
            double beta = 1.0 - cur / prev;
            beta = std::min(std::max(beta, 1e-8), 0.999);
            s.betas[static_cast<size_t>(i - 1)] = beta;
            prev = cur;
        }
    }
    s.alphas_bar.resize(static_cast<size_t>(steps) + 1);
    s.alphas_bar[0] = 1.0;
    for (int i = 1; i <= steps; ++i)
        s.alphas_bar[static_cast<size_t>(i)] = s.alphas_bar[static_cast<size_t>(i - 1)] * (1.0 - s.beta(i));
    s.posterior_var.resize(static_cast<size_t>(steps));
    for (int i = 1; i <= steps; ++i)
        s.posterior_var[static_cast<size_t>(i - 1)] = s.beta(i) * (1.0 - s.abar(i - 1)) / (1.0 - s.abar(i));
    return s;
}

nn::Matrix q_sample(const DiffusionSchedule& schedule, const nn::Matrix& tau0, int i, const nn::Matrix& eps) {
    if (i < 1 || i > schedule.steps) throw Error("q_sample: timestep out of range");
    if (eps.rows() != tau0.rows() || eps.cols() != tau0.cols()) throw Error("q_sample: shape mismatch");
    const double ab = schedule.abar(i);
    return std::sqrt(ab) * tau0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd timestep_embedding(int i, int dim) {
    if (dim < 2 || dim % 2 != 0) throw Error("timestep_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    Eigen::VectorXd emb(dim);
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / (half - 1));
        emb[k] = std::sin(i * freq);
        emb[half + k] = std::cos(i * freq);
    }
    return emb;
}

nn::Matrix NoiseModel::predict_noise(const nn::Matrix& tau_normed, int i) const {
    if (tau_normed.rows() != horizon || tau_normed.cols() != state_dim) throw Error("predict_noise: shape mismatch");
    const int flat = horizon * state_dim;
    nn::Matrix input(1, flat + time_dim);
    for (int t = 0; t < horizon; ++t)
        for (int d = 0; d < state_dim; ++d) input(0, t * state_dim + d) = tau_normed(t, d);
    input.block(0, flat, 1, time_dim) = timestep_embedding(i, time_dim).transpose();
    const nn::Matrix out = nn::forward(spec, params, input);
    nn::Matrix eps(horizon, state_dim);
    for (int t = 0; t < horizon; ++t)
        for (int d = 0; d < state_dim; ++d) eps(t, d) = out(0, t * state_dim + d);
    return eps;
}

double noise_loss(const NoiseModel& model, const std::vector<nn::Matrix>& taus_raw, Rng& rng,
                  std::vector<double>* grads) {
    const int B = static_cast<int>(taus_raw.size());
    if (B < 1) throw Error("noise_loss: empty batch");
    const int flat = model.horizon * model.state_dim;
    nn::Matrix input(B, flat + model.time_dim);
    nn::Matrix target(B, flat);
    for (int b = 0; b < B; ++b) {
        if (taus_raw[static_cast<size_t>(b)].rows() != model.horizon ||
            taus_raw[static_cast<size_t>(b)].cols() != model.state_dim)
            throw Error("noise_loss: window shape mismatch");
        const nn::Matrix tau0 = model.normalizer.normalize(taus_raw[static_cast<size_t>(b)]);
        const int i = static_cast<int>(rng.uniform_int(1, model.schedule.steps));
        nn::Matrix eps(model.horizon, model.state_dim);
        for (int t = 0; t < model.horizon; ++t)
            for (int d = 0; d < model.state_dim; ++d) eps(t, d) = rng.normal();
        const nn::Matrix noisy = q_sample(model.schedule, tau0, i, eps);
        for (int t = 0; t < model.horizon; ++t)
            for (int d = 0; d < model.state_dim; ++d) {
                input(b, t * model.state_dim + d) = noisy(t, d);
                target(b, t * model.state_dim + d) = eps(t, d);
            }
        input.block(b, flat, 1, model.time_dim) = timestep_embedding(i, model.time_dim).transpose();
    }
    if (!grads) {
        const nn::Matrix pred = nn::forward(model.spec, model.params, input);
        return (pred - target).array().square().rowwise().sum().mean();
    }
    const nn::ForwardTrace trace = nn::forward_trace(model.spec, model.params, input);
    const nn::Matrix diff = trace.output() - target;
    const double loss = diff.array().square().rowwise().sum().mean();
    const nn::Matrix upstream = (2.0 / B) * diff;
    nn::Gradients g = nn::backward_from_trace(model.spec, model.params, trace, upstream);
    *grads = std::move(g.params);
    return loss;
}

namespace {

void apply_replacement(nn::Matrix& x, const NoiseModel& model, const CondSpec& cond, int level, Rng& rng) {
    for (const auto& clamp : cond) {
        nn::Matrix value(1, model.state_dim);
        value.row(0) = clamp.value.transpose();
        const nn::Matrix normed = model.normalizer.normalize(value);
        if (level >= 1) {
            nn::Matrix eps(1, model.state_dim);
            for (int d = 0; d < model.state_dim; ++d) eps(0, d) = rng.normal();
            x.row(clamp.index) = q_sample(model.schedule, normed, level, eps).row(0);
        } else {
            x.row(clamp.index) = normed.row(0);
        }
    }
}

void validate_cond(const NoiseModel& model, const CondSpec& cond) {
    std::vector<bool> seen(static_cast<size_t>(model.horizon), false);
    for (const auto& clamp : cond) {
        if (clamp.index < 0 || clamp.index >= model.horizon) throw Error("conditioning index out of range");
        if (clamp.value.size() != model.state_dim) throw Error("conditioning value dimension mismatch");
        if (seen[static_cast<size_t>(clamp.index)]) throw Error("duplicate conditioning index");
        seen[static_cast<size_t>(clamp.index)] = true;
    }
}

nn::Matrix finalize_sample(nn::Matrix x_normed, const NoiseModel& model, const CondSpec& cond) {
    nn::Matrix out = model.normalizer.denormalize(x_normed);
    for (const auto& clamp : cond) out.row(clamp.index) = clamp.value.transpose();  // bit-exact boundary contract
    return out;
}

}  // namespace

nn::Matrix ddpm_sample(const NoiseModel& model, Rng& rng, const CondSpec& cond) {
    if (!model.trained) throw Error("ddpm_sample: model is not trained");
    validate_cond(model, cond);
    const auto& sched = model.schedule;
    nn::Matrix x(model.horizon, model.state_dim);
    for (int t = 0; t < model.horizon; ++t)
        for (int d = 0; d < model.state_dim; ++d) x(t, d) = rng.normal();
    apply_replacement(x, model, cond, sched.steps, rng);
    for (int i = sched.steps; i >= 1; --i) {
        const nn::Matrix eps_hat = model.predict_noise(x, i);
        const double beta = sched.beta(i);
        const double ab = sched.abar(i);
        nn::Matrix mu = (x - (beta / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(1.0 - beta);
        if (i > 1) {
            const double sigma = std::sqrt(sched.posterior_var[static_cast<size_t>(i - 1)]);
            for (int t = 0; t < model.horizon; ++t)
                for (int d = 0; d < model.state_dim; ++d) mu(t, d) += sigma * rng.normal();
        }
        x = std::move(mu);
        apply_replacement(x, model, cond, i - 1, rng);
    }
    return finalize_sample(std::move(x), model, cond);
}

nn::Matrix ddim_sample(const NoiseModel& model, int n_steps, Rng& rng, const CondSpec& cond) {
    if (!model.trained) throw Error("ddim_sample: model is not trained");
    if (n_steps < 1) throw Error("ddim_sample: n_steps must be >= 1");
    if (n_steps > model.schedule.steps) throw Error("ddim_sample: n_steps exceeds schedule");
    validate_cond(model, cond);
    const auto& sched = model.schedule;
    // evenly strided timesteps, ascending, ending at M
    std::vector<int> ts(static_cast<size_t>(n_steps));
    for (int j = 0; j < n_steps; ++j)
        ts[static_cast<size_t>(j)] = static_cast<int>(std::llround(static_cast<double>(j + 1) * sched.steps / n_steps));

    nn::Matrix x(model.horizon, model.state_dim);
    for (int t = 0; t < model.horizon; ++t)
        for (int d = 0; d < model.state_dim; ++d) x(t, d) = rng.normal();
    apply_replacement(x, model, cond, sched.steps, rng);
    for (int j = n_steps - 1; j >= 0; --j) {
        const int t = ts[static_cast<size_t>(j)];
        const int t_prev = j > 0 ? ts[static_cast<size_t>(j - 1)] : 0;
        const nn::Matrix eps_hat = model.predict_noise(x, t);
        const double ab = sched.abar(t);
        const double ab_prev = sched.abar(t_prev);
        const nn::Matrix x0 = (x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
        x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
        apply_replacement(x, model, cond, t_prev, rng);
    }
    return finalize_sample(std::move(x), model, cond);
}

void DiffTrainConfig::validate() const {
    if (diffusion_steps < 1) throw ConfigError("diffusion_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (horizon < 2) throw ConfigError("horizon must be >= 2");
    if (jump < 1) throw ConfigError("jump must be >= 1");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
}

DiffusionTrainer::DiffusionTrainer(const maze::Dataset& data, const DiffTrainConfig& config)
    : data_(data), config_(config), rng_(mix_seed(config.seed, 0xd1ff)) {
    config_.validate();
    const int span = (config.horizon - 1) * config.jump;  // states needed minus one
    for (size_t i = 0; i < data.trajectories.size(); ++i)
        if (static_cast<int>(data.trajectories[i].states.size()) > span) usable_trajs_.push_back(static_cast<int>(i));
    if (usable_trajs_.empty()) throw Error("DiffusionTrainer: no trajectory long enough for one window");

    model_.horizon = config.horizon;
    model_.state_dim = 2;
    model_.jump = config.jump;
    model_.schedule = make_schedule(config.diffusion_steps, config.kind);
    model_.spec.layer_dims = {config.horizon * 2 + model_.time_dim};
    for (int h : config.hidden) model_.spec.layer_dims.push_back(h);
    model_.spec.layer_dims.push_back(config.horizon * 2);
    model_.spec.activation = nn::Activation::gelu;
    model_.params = nn::init_params(model_.spec, config.seed);

    const auto states = data.all_states();
    nn::Matrix mat(static_cast<Eigen::Index>(states.size()), 2);
    for (size_t i = 0; i < states.size(); ++i) mat.row(static_cast<Eigen::Index>(i)) << states[i].x, states[i].y;
    model_.normalizer = Normalizer::fit(mat);

    adam_ = nn::make_adam(model_.spec.param_count(), config.lr);
}

nn::Matrix DiffusionTrainer::sample_window(Rng& rng) const {
    const int ti = usable_trajs_[static_cast<size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(usable_trajs_.size()) - 1))];
    const auto& traj = data_.trajectories[static_cast<size_t>(ti)];
    const int span = (config_.horizon - 1) * config_.jump;
    const int max_start = static_cast<int>(traj.states.size()) - 1 - span;
    const int start = static_cast<int>(rng.uniform_int(0, max_start));
    nn::Matrix tau(config_.horizon, 2);
    for (int j = 0; j < config_.horizon; ++j) {
        const auto& s = traj.states[static_cast<size_t>(start + j * config_.jump)];
        tau.row(j) << s.x, s.y;
    }
    return tau;
}

double DiffusionTrainer::train_step() {
    std::vector<nn::Matrix> batch;
    batch.reserve(static_cast<size_t>(config_.batch_size));
    for (int b = 0; b < config_.batch_size; ++b) batch.push_back(sample_window(rng_));
    std::vector<double> grads;
    const double loss = noise_loss(model_, batch, rng_, &grads);
    if (config_.weight_decay > 0.0)
        for (size_t i = 0; i < grads.size(); ++i) grads[i] += config_.weight_decay * model_.params.values[i];
    nn::adam_step(adam_, model_.params, grads);
    step_ += 1;
    model_.trained = true;
    return loss;
}

namespace {
constexpr int kDiffTrainStateVersion = 1;
constexpr int kNoiseModelMetaVersion = 1;
}  // namespace

std::string DiffusionTrainer::serialize_state() const {
    json header{{"format_version", kDiffTrainStateVersion},
                {"kind", "diffusion_train_state"},
                {"step", step_},
                {"adam_step_count", adam_.step_count},
                {"rng", rng_.serialize()},
                {"trained", model_.trained},
                {"param_count", model_.params.values.size()}};
    std::string out = dump_json(header);
    out += '\n';
    append_doubles(out, model_.params.values);
    append_doubles(out, adam_.m);
    append_doubles(out, adam_.v);
    return out;
}

void DiffusionTrainer::restore_state(const std::string& blob) {
    const size_t nl = blob.find('\n');
    if (nl == std::string::npos) throw IoError("diffusion train state: missing header");
    const json header = parse_json(blob.substr(0, nl));
    if (header.value("format_version", -1) != kDiffTrainStateVersion)
        throw IoError("diffusion train state: version mismatch");
    if (header.value("kind", "") != "diffusion_train_state") throw IoError("diffusion train state: wrong kind");
    const size_t count = header.at("param_count").get<size_t>();
    if (count != model_.params.values.size()) throw IoError("diffusion train state: param count mismatch");
    size_t offset = nl + 1;
    read_doubles(blob, offset, model_.params.values, count);
    read_doubles(blob, offset, adam_.m, count);
    read_doubles(blob, offset, adam_.v, count);
    adam_.step_count = header.at("adam_step_count").get<std::int64_t>();
    step_ = header.at("step").get<std::int64_t>();
    model_.trained = header.at("trained").get<bool>();
    rng_.deserialize(header.at("rng").get<std::string>());
}

void save_noise_model(const NoiseModel& model, const std::string& path) {
    nn::save_params(model.spec, model.params, path);
    json meta{{"format_version", kNoiseModelMetaVersion},
              {"kind", "noise_model"},
              {"schedule_kind", schedule_kind_name(model.schedule.kind)},
              {"diffusion_steps", model.schedule.steps},
              {"horizon", model.horizon},
              {"state_dim", model.state_dim},
              {"jump", model.jump},
              {"time_dim", model.time_dim},
              {"trained", model.trained},
              {"normalizer", model.normalizer.to_json()}};
    write_file(path + ".meta.json", dump_json(meta) + "\n");
}

NoiseModel load_noise_model(const std::string& path) {
    NoiseModel model;
    auto [spec, params] = nn::load_params(path);
    model.spec = std::move(spec);
    model.params = std::move(params);
    const json meta = parse_json(read_file(path + ".meta.json"));
    if (meta.value("format_version", -1) != kNoiseModelMetaVersion) throw IoError("noise model sidecar: version mismatch");
    if (meta.value("kind", "") != "noise_model") throw IoError("noise model sidecar: wrong kind");
    model.schedule = make_schedule(meta.at("diffusion_steps").get<int>(),
                                   schedule_kind_from_name(meta.at("schedule_kind").get<std::string>()));
    model.horizon = meta.at("horizon").get<int>();
    model.state_dim = meta.at("state_dim").get<int>();
    model.jump = meta.at("jump").get<int>();
    model.time_dim = meta.at("time_dim").get<int>();
    model.trained = meta.at("trained").get<bool>();
    model.normalizer = Normalizer::from_json(meta.at("normalizer"));
    if (model.spec.input_dim() != model.horizon * model.state_dim + model.time_dim ||
        model.spec.output_dim() != model.horizon * model.state_dim)
        throw IoError("noise model sidecar: shape mismatch with params");
    return model;
}

}  // namespace trajstitch::diffusion
