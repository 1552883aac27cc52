#pragma once

#include <vector>

#include <Eigen/Core>

#include "trajstitch/jsonio.hpp"

namespace trajstitch {

// Per-dimension scaling used to condition model inputs. The scale is a power
// of two, so normalize/denormalize are exact bijections on doubles:
// normalize(denormalize(x)) == x bitwise and vice versa. Summary statistics
// of the fitted data are kept alongside for reporting.
struct Normalizer {
    std::vector<double> scale;  // one power of two per dimension
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> minv;
    std::vector<double> maxv;

    int dims() const { return static_cast<int>(scale.size()); }

    // Picks scale_d = 2^ceil(log2(max(|min_d|, |max_d|, 1e-8))) so that
    // normalized data lies in [-1, 1].
    static Normalizer fit(const Eigen::MatrixXd& data);

    static Normalizer identity(int dims);

    Eigen::MatrixXd normalize(const Eigen::MatrixXd& raw) const;
    Eigen::MatrixXd denormalize(const Eigen::MatrixXd& normed) const;

    json to_json() const;
    static Normalizer from_json(const json& j);
};

}  // namespace trajstitch
