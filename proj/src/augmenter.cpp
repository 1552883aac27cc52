#include "trajstitch/augmenter.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "trajstitch/blobio.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"

namespace trajstitch::stitch {

void StitchConfig::validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (k_density < 1) throw ConfigError("k_density must be >= 1");
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    if (n_stitch < 0) throw ConfigError("n_stitch must be >= 0");
    if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
    if (h_stitcher < 2) throw ConfigError("h_stitcher must be >= 2");
}

Eigen::VectorXd sample_direction(int latent_dim, Rng& rng) {
    if (latent_dim < 1) throw Error("sample_direction: latent_dim must be >= 1");
    Eigen::VectorXd z(latent_dim);
    double norm = 0.0;
    do {
        for (int i = 0; i < latent_dim; ++i) z[i] = rng.normal();
        norm = z.norm();
    } while (norm == 0.0);
    return z / norm;
}

double progress_score(const ivf::SegmentRecord& segment, const Eigen::VectorXd& z) {
    return (segment.phi_end - segment.phi_start).dot(z);
}

double novelty_score(const Eigen::VectorXd& candidate_end_latent, const std::vector<Eigen::VectorXd>& v_rollout,
                     int k_density) {
    if (k_density < 1) throw Error("novelty_score: k_density must be >= 1");
    if (v_rollout.empty()) return 0.0;
    std::vector<double> dists;
    dists.reserve(v_rollout.size());
    for (const auto& v : v_rollout) dists.push_back((candidate_end_latent - v).norm());
    const size_t kk = std::min(static_cast<size_t>(k_density), dists.size());
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(kk), dists.end());
    double sum = 0.0;
    for (size_t i = 0; i < kk; ++i) sum += dists[i];
    return sum / static_cast<double>(kk);
}

size_t select_best(const std::vector<std::int64_t>& candidate_ids, const std::vector<double>& scores) {
    if (candidate_ids.empty() || candidate_ids.size() != scores.size())
        throw Error("select_best: empty or mismatched candidates");
    size_t best = 0;
    for (size_t j = 1; j < candidate_ids.size(); ++j) {
        if (scores[j] > scores[best] || (scores[j] == scores[best] && candidate_ids[j] < candidate_ids[best]))
            best = j;
    }
    return best;
}

maze::Trajectory refine_bridge(const diffusion::NoiseModel& stitcher, const maze::EnvState& start,
                               const maze::EnvState& end, Rng& rng, int ddim_steps) {
    diffusion::CondSpec cond(2);
    cond[0].index = 0;
    cond[0].value = Eigen::Vector2d(start.x, start.y);
    cond[1].index = stitcher.horizon - 1;
    cond[1].value = Eigen::Vector2d(end.x, end.y);
    const nn::Matrix sample = diffusion::ddim_sample(stitcher, ddim_steps, rng, cond);
    maze::Trajectory bridge;
    bridge.states.reserve(static_cast<size_t>(stitcher.horizon));
    for (int t = 0; t < stitcher.horizon; ++t) bridge.states.push_back(maze::EnvState{sample(t, 0), sample(t, 1)});
    return bridge;
}

nn::Matrix InverseDynamicsModel::logits(const nn::Matrix& pairs_raw) const {
    if (pairs_raw.cols() != 4) throw Error("InverseDynamicsModel: expected B x 4 input");
    nn::Matrix scaled = pairs_raw;
    for (int j = 0; j < 4; ++j) scaled.col(j) /= normalizer.scale[static_cast<size_t>(j % 2)];
    return nn::forward(spec, params, scaled);
}

maze::ActionId InverseDynamicsModel::predict(const maze::EnvState& s, const maze::EnvState& s_next) const {
    nn::Matrix pair(1, 4);
    pair << s.x, s.y, s_next.x, s_next.y;
    const nn::Matrix out = logits(pair);
    Eigen::Index best;
    out.row(0).maxCoeff(&best);
    return static_cast<maze::ActionId>(best);
}

InvDynTrainer::InvDynTrainer(const maze::Dataset& data, const InvDynTrainConfig& config)
    : data_(data), config_(config), rng_(mix_seed(config.seed, 0x1d7)) {
    bool has_transition = false;
    for (const auto& t : data.trajectories)
        if (t.states.size() >= 2) has_transition = true;
    if (!has_transition) throw Error("InvDynTrainer: dataset has no transitions");

    model_.spec.layer_dims = {4};
    for (int h : config.hidden) model_.spec.layer_dims.push_back(h);
    model_.spec.layer_dims.push_back(maze::kNumActions);
    model_.spec.activation = nn::Activation::gelu;
    model_.params = nn::init_params(model_.spec, config.seed);

    const auto states = data.all_states();
    nn::Matrix mat(static_cast<Eigen::Index>(states.size()), 2);
    for (size_t i = 0; i < states.size(); ++i) mat.row(static_cast<Eigen::Index>(i)) << states[i].x, states[i].y;
    model_.normalizer = Normalizer::fit(mat);

    adam_ = nn::make_adam(model_.spec.param_count(), config.lr);
}

double InvDynTrainer::train_step() {
    const int B = config_.batch_size;
    nn::Matrix input(B, 4);
    std::vector<int> labels(static_cast<size_t>(B));
    const auto& trajs = data_.trajectories;
    for (int b = 0; b < B; ++b) {
        const maze::Trajectory* t = nullptr;
        do {
            t = &trajs[static_cast<size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(trajs.size()) - 1))];
        } while (t->states.size() < 2);
        const std::int64_t i = rng_.uniform_int(0, static_cast<std::int64_t>(t->states.size()) - 2);
        const auto& s = t->states[static_cast<size_t>(i)];
        const auto& sn = t->states[static_cast<size_t>(i + 1)];
        input.row(b) << s.x / model_.normalizer.scale[0], s.y / model_.normalizer.scale[1],
            sn.x / model_.normalizer.scale[0], sn.y / model_.normalizer.scale[1];
        labels[static_cast<size_t>(b)] = t->actions[static_cast<size_t>(i)];
    }
    const nn::ForwardTrace trace = nn::forward_trace(model_.spec, model_.params, input);
    const nn::Matrix& out = trace.output();
    nn::Matrix upstream(B, maze::kNumActions);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const double mx = out.row(b).maxCoeff();
        Eigen::ArrayXd ex = (out.row(b).array() - mx).exp();
        const double Z = ex.sum();
        const int y = labels[static_cast<size_t>(b)];
        loss += -(out(b, y) - mx - std::log(Z));
        upstream.row(b) = (ex / Z).matrix();
        upstream(b, y) -= 1.0;
    }
    loss /= B;
    upstream /= static_cast<double>(B);
    nn::Gradients g = nn::backward_from_trace(model_.spec, model_.params, trace, upstream);
    nn::adam_step(adam_, model_.params, g.params);
    step_ += 1;
    return loss;
}

namespace {
constexpr int kInvDynStateVersion = 1;
constexpr int kInvDynMetaVersion = 1;
}  // namespace

std::string InvDynTrainer::serialize_state() const {
    json header{{"format_version", kInvDynStateVersion},
                {"kind", "invdyn_train_state"},
                {"step", step_},
                {"adam_step_count", adam_.step_count},
                {"rng", rng_.serialize()},
                {"param_count", model_.params.values.size()}};
    std::string out = dump_json(header);
    out += '\n';
    append_doubles(out, model_.params.values);
    append_doubles(out, adam_.m);
    append_doubles(out, adam_.v);
    return out;
}

void InvDynTrainer::restore_state(const std::string& blob) {
    const size_t nl = blob.find('\n');
    if (nl == std::string::npos) throw IoError("invdyn train state: missing header");
    const json header = parse_json(blob.substr(0, nl));
    if (header.value("format_version", -1) != kInvDynStateVersion) throw IoError("invdyn train state: version mismatch");
    if (header.value("kind", "") != "invdyn_train_state") throw IoError("invdyn train state: wrong kind");
    const size_t count = header.at("param_count").get<size_t>();
    if (count != model_.params.values.size()) throw IoError("invdyn train state: param count mismatch");
    size_t offset = nl + 1;
    read_doubles(blob, offset, model_.params.values, count);
    read_doubles(blob, offset, adam_.m, count);
    read_doubles(blob, offset, adam_.v, count);
    adam_.step_count = header.at("adam_step_count").get<std::int64_t>();
    step_ = header.at("step").get<std::int64_t>();
    rng_.deserialize(header.at("rng").get<std::string>());
}

InverseDynamicsModel train_inverse_dynamics(const maze::Dataset& data, const InvDynTrainConfig& config) {
    InvDynTrainer trainer(data, config);
    for (std::int64_t i = 0; i < config.train_steps; ++i) trainer.train_step();
    return trainer.model();
}

std::vector<maze::ActionId> infer_actions(const InverseDynamicsModel& f_psi,
                                          const std::vector<maze::EnvState>& states) {
    if (states.size() < 2) throw Error("infer_actions: need at least 2 states");
    const int n = static_cast<int>(states.size());
    nn::Matrix pairs(n - 1, 4);
    for (int i = 0; i + 1 < n; ++i)
        pairs.row(i) << states[static_cast<size_t>(i)].x, states[static_cast<size_t>(i)].y,
            states[static_cast<size_t>(i + 1)].x, states[static_cast<size_t>(i + 1)].y;
    const nn::Matrix out = f_psi.logits(pairs);
    std::vector<maze::ActionId> actions(static_cast<size_t>(n));
    for (int i = 0; i + 1 < n; ++i) {
        Eigen::Index best;
        out.row(i).maxCoeff(&best);
        actions[static_cast<size_t>(i)] = static_cast<maze::ActionId>(best);
    }
    actions[static_cast<size_t>(n - 1)] = maze::kStayAction;
    return actions;
}

void save_inverse_dynamics(const InverseDynamicsModel& model, const std::string& path) {
    nn::save_params(model.spec, model.params, path);
    json meta{{"format_version", kInvDynMetaVersion},
              {"kind", "inverse_dynamics"},
              {"normalizer", model.normalizer.to_json()}};
    write_file(path + ".meta.json", dump_json(meta) + "\n");
}

InverseDynamicsModel load_inverse_dynamics(const std::string& path) {
    InverseDynamicsModel model;
    auto [spec, params] = nn::load_params(path);
    model.spec = std::move(spec);
    model.params = std::move(params);
    const json meta = parse_json(read_file(path + ".meta.json"));
    if (meta.value("format_version", -1) != kInvDynMetaVersion) throw IoError("invdyn sidecar: version mismatch");
    if (meta.value("kind", "") != "inverse_dynamics") throw IoError("invdyn sidecar: wrong kind");
    model.normalizer = Normalizer::from_json(meta.at("normalizer"));
    return model;
}

maze::Trajectory run_rollout(const StitchContext& ctx, const StitchConfig& config, std::uint64_t rollout_seed,
                             RolloutStats* stats) {
    config.validate();
    if (!ctx.data || !ctx.segments || !ctx.index || !ctx.phi || !ctx.stitcher || !ctx.f_psi)
        throw Error("run_rollout: incomplete context");
    const auto& segments = *ctx.segments;
    if (segments.empty()) throw Error("run_rollout: empty segment set");
    if (ctx.stitcher->horizon != config.h_stitcher) throw Error("run_rollout: stitcher horizon mismatch");

    Rng rng(rollout_seed);

    // initial segment, uniform over the extracted windows
    const auto& init =
        segments[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(segments.size()) - 1))];
    const auto& src = ctx.data->trajectories[static_cast<size_t>(init.traj_id)];
    std::vector<maze::EnvState> states(src.states.begin() + init.start_offset,
                                       src.states.begin() + init.start_offset + init.length);

    const Eigen::VectorXd z = sample_direction(ctx.phi->latent_dim(), rng);

    std::vector<Eigen::VectorXd> v_rollout;
    v_rollout.reserve(states.size() + static_cast<size_t>(config.n_stitch) * (config.h_stitcher - 1));
    {
        nn::Matrix mat(static_cast<Eigen::Index>(states.size()), 2);
        for (size_t i = 0; i < states.size(); ++i) mat.row(static_cast<Eigen::Index>(i)) << states[i].x, states[i].y;
        const nn::Matrix latents = ctx.phi->embed(mat);
        for (Eigen::Index i = 0; i < latents.rows(); ++i) v_rollout.push_back(latents.row(i).transpose());
    }

    for (int it = 0; it < config.n_stitch; ++it) {
        const Eigen::VectorXd query = ctx.phi->embed_state(states.back());
        const auto hits = ivf::topk(*ctx.index, query, config.k);
        std::vector<std::int64_t> ids(hits.size());
        std::vector<double> scores(hits.size());
        std::vector<double> progresses(hits.size()), novelties(hits.size());
        for (size_t j = 0; j < hits.size(); ++j) {
            const auto& seg = segments[static_cast<size_t>(hits[j].id)];
            ids[j] = seg.id;
            progresses[j] = progress_score(seg, z);
            novelties[j] = novelty_score(seg.phi_end, v_rollout, config.k_density);
            scores[j] = combined_score(progresses[j], novelties[j], config.beta);
        }
        const size_t best = select_best(ids, scores);
        const auto& chosen = segments[static_cast<size_t>(ids[best])];

        maze::Trajectory bridge = refine_bridge(*ctx.stitcher, states.back(), chosen.end_state, rng);
        if (stats) {
            JunctionStats js;
            js.selected_id = chosen.id;
            js.raw_gap = (query - chosen.phi_start).norm();
            js.progress = progresses[best];
            js.novelty = novelties[best];
            js.score = scores[best];
            stats->junctions.push_back(js);
            stats->refined_transitions.emplace_back(states.back(), bridge.states[1]);
            stats->raw_transitions.emplace_back(states.back(), chosen.start_state);
        }

        // append the bridge, dropping its first state (== current endpoint)
        nn::Matrix appended(config.h_stitcher - 1, 2);
        for (int t = 1; t < config.h_stitcher; ++t) {
            states.push_back(bridge.states[static_cast<size_t>(t)]);
            appended.row(t - 1) << bridge.states[static_cast<size_t>(t)].x, bridge.states[static_cast<size_t>(t)].y;
        }
        const nn::Matrix latents = ctx.phi->embed(appended);
        for (Eigen::Index i = 0; i < latents.rows(); ++i) v_rollout.push_back(latents.row(i).transpose());
    }

    maze::Trajectory out;
    out.states = std::move(states);
    out.actions = infer_actions(*ctx.f_psi, out.states);
    return out;
}

maze::Dataset augment_dataset(const StitchContext& ctx, const StitchConfig& config, int threads,
                              const json& extra_meta) {
    config.validate();
    maze::Dataset ds;
    ds.spec = ctx.data->spec;
    ds.trajectories.resize(static_cast<size_t>(config.n_traj));

    const int workers = std::max(1, std::min(threads, config.n_traj));
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int n = next.fetch_add(1);
            if (n >= config.n_traj) break;
            maze::Trajectory t = run_rollout(ctx, config, mix_seed(config.seed, static_cast<std::uint64_t>(n)));
            t.episode_id = n;
            ds.trajectories[static_cast<size_t>(n)] = std::move(t);
        }
    };
    if (workers == 1) {
        worker();
    } else {
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ds.meta = json{{"generator", "augment"},
                   {"seed", config.seed},
                   {"n_traj", config.n_traj},
                   {"n_stitch", config.n_stitch},
                   {"k", config.k},
                   {"k_density", config.k_density},
                   {"beta", config.beta},
                   {"h_stitcher", config.h_stitcher}};
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) ds.meta[it.key()] = it.value();
    return ds;
}

}  // namespace trajstitch::stitch
