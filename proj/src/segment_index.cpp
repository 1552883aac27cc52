#include "trajstitch/segment_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trajstitch/blobio.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"

namespace trajstitch::ivf {

std::vector<SegmentRecord> extract_segments(const maze::Dataset& data, const embed::EmbeddingModel& model,
                                            int h_seg, int stride, ExtractReport* report) {
    if (h_seg < 2) throw ConfigError("h_seg must be >= 2");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    std::vector<SegmentRecord> records;
    std::int64_t skipped = 0;
    for (size_t ti = 0; ti < data.trajectories.size(); ++ti) {
        const auto& traj = data.trajectories[ti];
        const int n = static_cast<int>(traj.states.size());
        if (n < h_seg) {
            ++skipped;
            continue;
        }
        for (int start = 0; start + h_seg <= n; start += stride) {
            SegmentRecord rec;
            rec.id = static_cast<std::int64_t>(records.size());
            rec.traj_id = static_cast<std::int32_t>(ti);
            rec.start_offset = start;
            rec.length = h_seg;
            rec.start_state = traj.states[static_cast<size_t>(start)];
            rec.end_state = traj.states[static_cast<size_t>(start + h_seg - 1)];
            records.push_back(std::move(rec));
        }
    }
    // embed all endpoints in one batch
    if (!records.empty()) {
        nn::Matrix pts(static_cast<Eigen::Index>(records.size()) * 2, 2);
        for (size_t i = 0; i < records.size(); ++i) {
            pts.row(static_cast<Eigen::Index>(2 * i)) << records[i].start_state.x, records[i].start_state.y;
            pts.row(static_cast<Eigen::Index>(2 * i + 1)) << records[i].end_state.x, records[i].end_state.y;
        }
        const nn::Matrix latents = model.embed(pts);
        for (size_t i = 0; i < records.size(); ++i) {
            records[i].phi_start = latents.row(static_cast<Eigen::Index>(2 * i)).transpose();
            records[i].phi_end = latents.row(static_cast<Eigen::Index>(2 * i + 1)).transpose();
        }
    }
    if (report) {
        report->records = static_cast<std::int64_t>(records.size());
        report->skipped_trajectories = skipped;
    }
    return records;
}

Eigen::MatrixXd segment_keys(const std::vector<SegmentRecord>& records) {
    if (records.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd keys(static_cast<Eigen::Index>(records.size()), records[0].phi_start.size());
    for (size_t i = 0; i < records.size(); ++i) keys.row(static_cast<Eigen::Index>(i)) = records[i].phi_start.transpose();
    return keys;
}

namespace {

// argmin over centroids for every row of x, via ||x||^2 - 2 x.c + ||c||^2
void assign_nearest(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids, std::vector<int>& assign) {
    const Eigen::VectorXd cn = centroids.rowwise().squaredNorm();
    assign.resize(static_cast<size_t>(x.rows()));
    const Eigen::Index block = 4096;
    for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += block) {
        const Eigen::Index rows = std::min(block, x.rows() - r0);
        Eigen::MatrixXd d = -2.0 * (x.middleRows(r0, rows) * centroids.transpose());
        d.rowwise() += cn.transpose();
        for (Eigen::Index r = 0; r < rows; ++r) {
            Eigen::Index best;
            d.row(r).minCoeff(&best);
            assign[static_cast<size_t>(r0 + r)] = static_cast<int>(best);
        }
    }
}

}  // namespace

IVFIndex build_ivf(const Eigen::MatrixXd& keys, int n_list, std::uint64_t seed) {
    if (n_list < 1) throw ConfigError("n_list must be >= 1");
    if (keys.rows() < n_list) throw ConfigError("n_list exceeds number of records");
    const Eigen::Index n = keys.rows();
    const Eigen::Index dim = keys.cols();
    Rng rng(mix_seed(seed, 0x1f5));

    // k-means++ seeding
    Eigen::MatrixXd centroids(n_list, dim);
    std::vector<double> d2(static_cast<size_t>(n), std::numeric_limits<double>::max());
    {
        const Eigen::Index first = rng.uniform_int(0, n - 1);
        centroids.row(0) = keys.row(first);
        for (int c = 1; c < n_list; ++c) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = (keys.row(i) - centroids.row(c - 1)).squaredNorm();
                if (d < d2[static_cast<size_t>(i)]) d2[static_cast<size_t>(i)] = d;
                total += d2[static_cast<size_t>(i)];
            }
            double pick = rng.uniform() * total;
            Eigen::Index chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                pick -= d2[static_cast<size_t>(i)];
                if (pick <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            centroids.row(c) = keys.row(chosen);
        }
    }

    // Lloyd iterations (fixed count, deterministic)
    std::vector<int> assign;
    for (int it = 0; it < 25; ++it) {
        assign_nearest(keys, centroids, assign);
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_list, dim);
        std::vector<std::int64_t> counts(static_cast<size_t>(n_list), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<size_t>(i)]) += keys.row(i);
            counts[static_cast<size_t>(assign[static_cast<size_t>(i)])] += 1;
        }
        for (int c = 0; c < n_list; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
            } else {
                // re-seed an empty cell with the point farthest from its centroid
                double worst = -1.0;
                Eigen::Index worst_i = 0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double d = (keys.row(i) - centroids.row(assign[static_cast<size_t>(i)])).squaredNorm();
                    if (d > worst) {
                        worst = d;
                        worst_i = i;
                    }
                }
                centroids.row(c) = keys.row(worst_i);
                assign[static_cast<size_t>(worst_i)] = c;
            }
        }
    }
    assign_nearest(keys, centroids, assign);

    IVFIndex index;
    index.n_list = n_list;
    index.latent_dim = static_cast<int>(dim);
    index.centroids = std::move(centroids);
    index.lists.assign(static_cast<size_t>(n_list), {});
    for (Eigen::Index i = 0; i < n; ++i) index.lists[static_cast<size_t>(assign[static_cast<size_t>(i)])].push_back(i);
    index.keys = keys;
    return index;
}

namespace {

std::vector<Hit> select_topk(const Eigen::MatrixXd& keys, const std::vector<std::int64_t>& candidates,
                             const Eigen::VectorXd& query, int k) {
    std::vector<Hit> hits;
    hits.reserve(candidates.size());
    for (const std::int64_t id : candidates)
        hits.push_back(Hit{id, (keys.row(id) - query.transpose()).norm()});
    const auto cmp = [](const Hit& a, const Hit& b) { return a.dist < b.dist || (a.dist == b.dist && a.id < b.id); };
    const size_t keep = std::min<size_t>(static_cast<size_t>(k), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), cmp);
    hits.resize(keep);
    return hits;
}

}  // namespace

std::vector<Hit> topk(const IVFIndex& index, const Eigen::VectorXd& query, int k, int n_probe) {
    if (index.count() == 0) throw Error("topk: empty index");
    if (k < 1) throw Error("topk: k must be >= 1");
    if (n_probe <= 0) n_probe = index.default_n_probe;
    n_probe = std::min(n_probe, index.n_list);

    std::vector<std::pair<double, int>> cd(static_cast<size_t>(index.n_list));
    for (int c = 0; c < index.n_list; ++c)
        cd[static_cast<size_t>(c)] = {(index.centroids.row(c) - query.transpose()).squaredNorm(), c};
    std::partial_sort(cd.begin(), cd.begin() + n_probe, cd.end());

    std::vector<std::int64_t> candidates;
    for (int p = 0; p < n_probe; ++p) {
        const auto& list = index.lists[static_cast<size_t>(cd[static_cast<size_t>(p)].second)];
        candidates.insert(candidates.end(), list.begin(), list.end());
    }
    return select_topk(index.keys, candidates, query, k);
}

std::vector<Hit> brute_topk(const Eigen::MatrixXd& keys, const Eigen::VectorXd& query, int k) {
    if (keys.rows() == 0) throw Error("brute_topk: no records");
    if (k < 1) throw Error("brute_topk: k must be >= 1");
    std::vector<std::int64_t> all(static_cast<size_t>(keys.rows()));
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    return select_topk(keys, all, query, k);
}

namespace {
constexpr int kIvfFormatVersion = 1;
}

void save_ivf(const IVFIndex& index, const std::string& path) {
    json header{{"format_version", kIvfFormatVersion},
                {"kind", "ivf_index"},
                {"n_list", index.n_list},
                {"latent_dim", index.latent_dim},
                {"count", index.count()},
                {"default_n_probe", index.default_n_probe}};
    std::string out = dump_json(header);
    out += '\n';
    std::vector<double> cent(static_cast<size_t>(index.n_list) * index.latent_dim);
    for (int c = 0; c < index.n_list; ++c)
        for (int d = 0; d < index.latent_dim; ++d)
            cent[static_cast<size_t>(c) * index.latent_dim + d] = index.centroids(c, d);
    append_doubles(out, cent);
    std::vector<std::int64_t> offsets(1, 0);
    std::vector<std::int64_t> ids;
    for (const auto& list : index.lists) {
        ids.insert(ids.end(), list.begin(), list.end());
        offsets.push_back(static_cast<std::int64_t>(ids.size()));
    }
    append_int64s(out, offsets);
    append_int64s(out, ids);
    write_file(path, out);
}

IVFIndex load_ivf(const std::string& path, const Eigen::MatrixXd& keys) {
    const std::string blob = read_file(path);
    const size_t nl = blob.find('\n');
    if (nl == std::string::npos) throw IoError("ivf file: missing header");
    const json header = parse_json(blob.substr(0, nl));
    if (header.value("format_version", -1) != kIvfFormatVersion) throw IoError("ivf file: version mismatch");
    if (header.value("kind", "") != "ivf_index") throw IoError("ivf file: wrong kind");
    IVFIndex index;
    index.n_list = header.at("n_list").get<int>();
    index.latent_dim = header.at("latent_dim").get<int>();
    index.default_n_probe = header.at("default_n_probe").get<int>();
    const std::int64_t count = header.at("count").get<std::int64_t>();
    if (keys.rows() != count || keys.cols() != index.latent_dim)
        throw StaleArtifactError("ivf file does not match the provided keys");

    size_t offset = nl + 1;
    std::vector<double> cent;
    read_doubles(blob, offset, cent, static_cast<size_t>(index.n_list) * index.latent_dim);
    index.centroids.resize(index.n_list, index.latent_dim);
    for (int c = 0; c < index.n_list; ++c)
        for (int d = 0; d < index.latent_dim; ++d)
            index.centroids(c, d) = cent[static_cast<size_t>(c) * index.latent_dim + d];
    std::vector<std::int64_t> offsets, ids;
    read_int64s(blob, offset, offsets, static_cast<size_t>(index.n_list) + 1);
    read_int64s(blob, offset, ids, static_cast<size_t>(count));
    if (offset != blob.size()) throw IoError("ivf file: trailing bytes");
    index.lists.assign(static_cast<size_t>(index.n_list), {});
    for (int c = 0; c < index.n_list; ++c) {
        const auto begin = offsets[static_cast<size_t>(c)];
        const auto end = offsets[static_cast<size_t>(c) + 1];
        if (begin < 0 || end < begin || end > count) throw IoError("ivf file: corrupt offsets");
        index.lists[static_cast<size_t>(c)].assign(ids.begin() + begin, ids.begin() + end);
    }
    index.keys = keys;
    return index;
}

}  // namespace trajstitch::ivf
