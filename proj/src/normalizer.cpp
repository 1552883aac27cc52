#include "trajstitch/normalizer.hpp"

#include <cmath>

#include "trajstitch/errors.hpp"

namespace trajstitch {

Normalizer Normalizer::fit(const Eigen::MatrixXd& data) {
    if (data.rows() < 1 || data.cols() < 1) throw Error("Normalizer::fit: empty data");
    const int d = static_cast<int>(data.cols());
    Normalizer n;
    n.scale.resize(d);
    n.mean.resize(d);
    n.stddev.resize(d);
    n.minv.resize(d);
    n.maxv.resize(d);
    for (int j = 0; j < d; ++j) {
        const auto col = data.col(j);
        n.mean[j] = col.mean();
        n.stddev[j] = std::sqrt((col.array() - n.mean[j]).square().mean());
        n.minv[j] = col.minCoeff();
        n.maxv[j] = col.maxCoeff();
        const double extent = std::max({std::abs(n.minv[j]), std::abs(n.maxv[j]), 1e-8});
        n.scale[j] = std::ldexp(1.0, static_cast<int>(std::ceil(std::log2(extent))));
    }
    return n;
}

Normalizer Normalizer::identity(int dims) {
    Normalizer n;
    n.scale.assign(dims, 1.0);
    n.mean.assign(dims, 0.0);
    n.stddev.assign(dims, 1.0);
    n.minv.assign(dims, 0.0);
    n.maxv.assign(dims, 0.0);
    return n;
}

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != dims()) throw Error("Normalizer::normalize: dimension mismatch");
    Eigen::MatrixXd out = raw;
    for (int j = 0; j < dims(); ++j) out.col(j) /= scale[j];
    return out;
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd& normed) const {
    if (normed.cols() != dims()) throw Error("Normalizer::denormalize: dimension mismatch");
    Eigen::MatrixXd out = normed;
    for (int j = 0; j < dims(); ++j) out.col(j) *= scale[j];
    return out;
}

json Normalizer::to_json() const {
    return json{{"scale", scale}, {"mean", mean}, {"stddev", stddev}, {"min", minv}, {"max", maxv}};
}

Normalizer Normalizer::from_json(const json& j) {
    Normalizer n;
    n.scale = j.at("scale").get<std::vector<double>>();
    n.mean = j.at("mean").get<std::vector<double>>();
    n.stddev = j.at("stddev").get<std::vector<double>>();
    n.minv = j.at("min").get<std::vector<double>>();
    n.maxv = j.at("max").get<std::vector<double>>();
    return n;
}

}  // namespace trajstitch
