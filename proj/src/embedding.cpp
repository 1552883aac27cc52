#include "trajstitch/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trajstitch/blobio.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"

namespace trajstitch::embed {

nn::Matrix EmbeddingModel::embed(const nn::Matrix& raw_states) const {
    return nn::forward(spec, params, normalizer.normalize(raw_states));
}

Eigen::VectorXd EmbeddingModel::embed_state(const maze::EnvState& s) const {
    nn::Matrix row(1, 2);
    row << s.x, s.y;
    return embed(row).row(0).transpose();
}

void EmbedTrainConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in (0,1)");
    if (!(xi > 0.0 && xi < 1.0)) throw ConfigError("xi must be in (0,1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (!(polyak > 0.0 && polyak <= 1.0)) throw ConfigError("polyak must be in (0,1]");
    if (std::abs(goal_mix.p_hindsight + goal_mix.p_random - 1.0) > 1e-12)
        throw ConfigError("p_hindsight + p_random must equal 1");
    if (!(goal_mix.geometric_p > 0.0 && goal_mix.geometric_p <= 1.0))
        throw ConfigError("geometric_p must be in (0,1]");
}

double value(const EmbeddingModel& model, const maze::EnvState& s, const maze::EnvState& g) {
    nn::Matrix batch(2, 2);
    batch << s.x, s.y, g.x, g.y;
    const nn::Matrix latents = model.embed(batch);
    return -(latents.row(0) - latents.row(1)).norm();
}

double expectile_loss(double u, double xi) {
    const double w = std::abs(xi - (u < 0.0 ? 1.0 : 0.0));
    return w * u * u;
}

TrainTuple sample_training_tuple(const maze::Dataset& data, const EmbedTrainConfig& config, Rng& rng) {
    if (data.trajectories.empty()) throw Error("sample_training_tuple: empty dataset");
    const auto& trajs = data.trajectories;
    const auto& t = trajs[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(trajs.size()) - 1))];
    const std::int64_t last = static_cast<std::int64_t>(t.states.size()) - 1;
    const std::int64_t i = last >= 1 ? rng.uniform_int(0, last - 1) : 0;
    TrainTuple tuple;
    tuple.s = t.states[static_cast<size_t>(i)];
    tuple.s_next = t.states[static_cast<size_t>(std::min(i + 1, last))];
    if (rng.uniform() < config.goal_mix.p_hindsight) {
        const std::int64_t offset = rng.geometric(config.goal_mix.geometric_p);
        tuple.g = t.states[static_cast<size_t>(std::min(i + offset, last))];
    } else {
        // uniform over every state in the dataset
        std::int64_t total = 0;
        for (const auto& tr : trajs) total += static_cast<std::int64_t>(tr.states.size());
        std::int64_t k = rng.uniform_int(0, total - 1);
        for (const auto& tr : trajs) {
            const std::int64_t n = static_cast<std::int64_t>(tr.states.size());
            if (k < n) {
                tuple.g = tr.states[static_cast<size_t>(k)];
                break;
            }
            k -= n;
        }
    }
    return tuple;
}

EmbedTrainer::EmbedTrainer(const maze::Dataset& data, const EmbedTrainConfig& config)
    : data_(data), config_(config), rng_(mix_seed(config.seed, 0x7d1)) {
    config_.validate();
    if (data.trajectories.empty()) throw Error("EmbedTrainer: empty dataset");
    equal_threshold_ = config.equal_threshold >= 0.0 ? config.equal_threshold : 0.5 * data.spec.cell_size;

    model_.spec.layer_dims = {2};
    for (int h : config.hidden) model_.spec.layer_dims.push_back(h);
    model_.spec.layer_dims.push_back(config.latent_dim);
    model_.spec.activation = nn::Activation::gelu;
    model_.params = nn::init_params(model_.spec, config.seed);

    const auto states = data.all_states();
    nn::Matrix mat(static_cast<Eigen::Index>(states.size()), 2);
    for (size_t i = 0; i < states.size(); ++i) mat.row(static_cast<Eigen::Index>(i)) << states[i].x, states[i].y;
    model_.normalizer = Normalizer::fit(mat);

    target_ = model_.params;
    adam_ = nn::make_adam(model_.spec.param_count(), config.lr);
}

double EmbedTrainer::train_step() {
    std::vector<TrainTuple> batch(static_cast<size_t>(config_.batch_size));
    for (auto& tuple : batch) tuple = sample_training_tuple(data_, config_, rng_);
    return td_train_step(batch);
}

double EmbedTrainer::td_train_step(const std::vector<TrainTuple>& batch) {
    const int B = static_cast<int>(batch.size());
    if (B < 1) throw Error("td_train_step: empty batch");
    nn::Matrix s(B, 2), sn(B, 2), g(B, 2);
    for (int i = 0; i < B; ++i) {
        s.row(i) << batch[i].s.x, batch[i].s.y;
        sn.row(i) << batch[i].s_next.x, batch[i].s_next.y;
        g.row(i) << batch[i].g.x, batch[i].g.y;
    }
    const nn::Matrix s_in = model_.normalizer.normalize(s);
    const nn::Matrix g_in = model_.normalizer.normalize(g);

    const nn::ForwardTrace trace_s = nn::forward_trace(model_.spec, model_.params, s_in);
    const nn::ForwardTrace trace_g = nn::forward_trace(model_.spec, model_.params, g_in);
    const nn::Matrix tgt_sn = nn::forward(model_.spec, target_, model_.normalizer.normalize(sn));
    const nn::Matrix tgt_g = nn::forward(model_.spec, target_, g_in);

    const nn::Matrix diff = trace_s.output() - trace_g.output();
    nn::Matrix up_s(B, model_.spec.output_dim());
    double loss = 0.0;
    for (int i = 0; i < B; ++i) {
        const double dist = diff.row(i).norm();
        const double raw_gap = (s.row(i) - g.row(i)).norm();
        double u;
        if (raw_gap <= equal_threshold_) {
            u = dist;  // terminal: target value 0, no bootstrap
        } else {
            const double target_dist = (tgt_sn.row(i) - tgt_g.row(i)).norm();
            u = -1.0 - config_.gamma * target_dist + dist;
        }
        const double w = std::abs(config_.xi - (u < 0.0 ? 1.0 : 0.0));
        loss += w * u * u;
        const double dl_du = 2.0 * w * u / B;
        if (dist > 1e-12) {
            up_s.row(i) = dl_du * diff.row(i) / dist;
        } else {
            up_s.row(i).setZero();
        }
    }
    loss /= B;

    nn::Gradients gs = nn::backward_from_trace(model_.spec, model_.params, trace_s, up_s);
    const nn::Gradients gg = nn::backward_from_trace(model_.spec, model_.params, trace_g, -up_s);
    for (size_t i = 0; i < gs.params.size(); ++i) gs.params[i] += gg.params[i];
    nn::adam_step(adam_, model_.params, gs.params);

    // Polyak averaging after the optimizer step
    const double tau = config_.polyak;
    for (size_t i = 0; i < target_.values.size(); ++i)
        target_.values[i] = (1.0 - tau) * target_.values[i] + tau * model_.params.values[i];

    step_ += 1;
    return loss;
}

namespace {
constexpr int kTrainStateVersion = 1;
}

std::string EmbedTrainer::serialize_state() const {
    json header{{"format_version", kTrainStateVersion},
                {"kind", "embed_train_state"},
                {"step", step_},
                {"adam_step_count", adam_.step_count},
                {"rng", rng_.serialize()},
                {"param_count", model_.params.values.size()}};
    std::string out = dump_json(header);
    out += '\n';
    append_doubles(out, model_.params.values);
    append_doubles(out, target_.values);
    append_doubles(out, adam_.m);
    append_doubles(out, adam_.v);
    return out;
}

void EmbedTrainer::restore_state(const std::string& blob) {
    const size_t nl = blob.find('\n');
    if (nl == std::string::npos) throw IoError("train state: missing header");
    const json header = parse_json(blob.substr(0, nl));
    if (header.value("format_version", -1) != kTrainStateVersion) throw IoError("train state: version mismatch");
    if (header.value("kind", "") != "embed_train_state") throw IoError("train state: wrong kind");
    const size_t count = header.at("param_count").get<size_t>();
    if (count != model_.params.values.size()) throw IoError("train state: param count mismatch");
    size_t offset = nl + 1;
    read_doubles(blob, offset, model_.params.values, count);
    read_doubles(blob, offset, target_.values, count);
    read_doubles(blob, offset, adam_.m, count);
    read_doubles(blob, offset, adam_.v, count);
    adam_.step_count = header.at("adam_step_count").get<std::int64_t>();
    step_ = header.at("step").get<std::int64_t>();
    rng_.deserialize(header.at("rng").get<std::string>());
}

EmbeddingModel train_embedding(const maze::Dataset& data, const EmbedTrainConfig& config, const LossLogger& logger) {
    EmbedTrainer trainer(data, config);
    for (std::int64_t i = 0; i < config.train_steps; ++i) {
        const double loss = trainer.train_step();
        if (logger) logger(trainer.step(), loss);
    }
    return trainer.model();
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw Error("spearman_rho: need >= 2 paired values");
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw Error("spearman_rho: undefined correlation (constant ranks)");
    return num / std::sqrt(va * vb);
}

double rank_quality(const EmbeddingModel& model, const maze::MazeSpec& spec, int n_pairs, Rng& rng) {
    std::vector<maze::Cell> cells;
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            if (spec.free_cell(x, y)) cells.push_back(maze::Cell{x, y});
    if (cells.size() < 2) throw Error("rank_quality: fewer than 2 free cells");

    // BFS field per source cell, computed lazily
    std::vector<std::vector<int>> fields(cells.size());
    auto field = [&](size_t ci) -> const std::vector<int>& {
        if (fields[ci].empty()) fields[ci] = maze::bfs_distances(spec, cells[ci]);
        return fields[ci];
    };

    std::vector<double> latent_dist;
    std::vector<double> oracle_dist;
    latent_dist.reserve(n_pairs);
    oracle_dist.reserve(n_pairs);
    int attempts = 0;
    const int max_attempts = n_pairs * 100 + 1000;
    while (static_cast<int>(latent_dist.size()) < n_pairs && attempts++ < max_attempts) {
        const size_t i = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1));
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1));
        const int d = field(i)[static_cast<size_t>(cells[j].y) * spec.width + cells[j].x];
        if (d == maze::kUnreachable) continue;
        const Eigen::VectorXd pa = model.embed_state(maze::center_of(spec, cells[i]));
        const Eigen::VectorXd pb = model.embed_state(maze::center_of(spec, cells[j]));
        latent_dist.push_back((pa - pb).norm());
        oracle_dist.push_back(static_cast<double>(d));
    }
    if (static_cast<int>(latent_dist.size()) < n_pairs) throw Error("rank_quality: could not sample reachable pairs");
    return spearman_rho(latent_dist, oracle_dist);
}

namespace {
constexpr int kEmbedMetaVersion = 1;
}

void save_embedding(const EmbeddingModel& model, double gamma, double xi, const std::string& path) {
    nn::save_params(model.spec, model.params, path);
    json meta{{"format_version", kEmbedMetaVersion},
              {"kind", "embedding"},
              {"latent_dim", model.latent_dim()},
              {"gamma", gamma},
              {"xi", xi},
              {"normalizer", model.normalizer.to_json()}};
    write_file(path + ".meta.json", dump_json(meta) + "\n");
}

EmbeddingModel load_embedding(const std::string& path) {
    EmbeddingModel model;
    auto [spec, params] = nn::load_params(path);
    model.spec = std::move(spec);
    model.params = std::move(params);
    const json meta = parse_json(read_file(path + ".meta.json"));
    if (meta.value("format_version", -1) != kEmbedMetaVersion) throw IoError("embedding sidecar: version mismatch");
    if (meta.value("kind", "") != "embedding") throw IoError("embedding sidecar: wrong kind");
    model.normalizer = Normalizer::from_json(meta.at("normalizer"));
    if (meta.at("latent_dim").get<int>() != model.latent_dim()) throw IoError("embedding sidecar: latent_dim mismatch");
    return model;
}

}  // namespace trajstitch::embed
