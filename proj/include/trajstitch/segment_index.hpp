#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajstitch/embedding.hpp"
#include "trajstitch/maze.hpp"

namespace trajstitch::ivf {

// Fixed-length trajectory window with embedded endpoints. `id` is the row in
// the extraction order, which is deterministic for a given dataset and model.
struct SegmentRecord {
    std::int64_t id = 0;
    std::int32_t traj_id = 0;
    std::int32_t start_offset = 0;
    std::int32_t length = 0;  // states in the window
    maze::EnvState start_state;
    maze::EnvState end_state;
    Eigen::VectorXd phi_start;
    Eigen::VectorXd phi_end;
};

struct ExtractReport {
    std::int64_t records = 0;
    std::int64_t skipped_trajectories = 0;
};

std::vector<SegmentRecord> extract_segments(const maze::Dataset& data, const embed::EmbeddingModel& model,
                                            int h_seg, int stride, ExtractReport* report = nullptr);

// phi_start rows stacked into an N x latent matrix (the search keys).
Eigen::MatrixXd segment_keys(const std::vector<SegmentRecord>& records);

struct Hit {
    std::int64_t id = 0;
    double dist = 0.0;
};

// Inverted-file index over latent vectors: k-means cells with posting lists.
// `keys` keeps a copy of the indexed vectors; the on-disk format stores only
// the structure (centroids + lists) and is rebound to keys on load.
struct IVFIndex {
    int n_list = 0;
    int latent_dim = 0;
    int default_n_probe = 32;
    Eigen::MatrixXd centroids;                     // n_list x latent
    std::vector<std::vector<std::int64_t>> lists;  // partition of [0, N)
    Eigen::MatrixXd keys;                          // N x latent

    std::int64_t count() const { return keys.rows(); }
};

// Seeded k-means++ init followed by 25 Lloyd iterations.
IVFIndex build_ivf(const Eigen::MatrixXd& keys, int n_list, std::uint64_t seed);

// k nearest keys among the n_probe closest clusters; ascending distance, ties
// by smaller id. n_probe <= 0 uses the index default.
std::vector<Hit> topk(const IVFIndex& index, const Eigen::VectorXd& query, int k, int n_probe = 0);

// Exact linear scan with the same ordering contract.
std::vector<Hit> brute_topk(const Eigen::MatrixXd& keys, const Eigen::VectorXd& query, int k);

// Binary little-endian file: header line {n_list, latent_dim, count,
// default_n_probe} + centroids + CSR list offsets + ids.
void save_ivf(const IVFIndex& index, const std::string& path);
IVFIndex load_ivf(const std::string& path, const Eigen::MatrixXd& keys);

}  // namespace trajstitch::ivf
