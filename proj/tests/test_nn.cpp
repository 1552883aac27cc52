#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"
#include "trajstitch/nn.hpp"
#include "trajstitch/rng.hpp"

using namespace trajstitch;
using namespace trajstitch::nn;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
}

// independent scalar-loop forward pass, no Eigen
std::vector<double> naive_forward(const MLPSpec& spec, const ParamSet& params, const std::vector<double>& input) {
    std::vector<double> a = input;
    size_t off = 0;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int in = spec.layer_dims[static_cast<size_t>(l)];
        const int out = spec.layer_dims[static_cast<size_t>(l) + 1];
        std::vector<double> z(static_cast<size_t>(out), 0.0);
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            for (int i = 0; i < in; ++i) acc += params.values[off + static_cast<size_t>(o) * in + i] * a[static_cast<size_t>(i)];
            acc += params.values[off + static_cast<size_t>(in) * out + o];
            z[static_cast<size_t>(o)] = acc;
        }
        off += static_cast<size_t>(in + 1) * out;
        if (l + 1 < spec.num_layers()) {
            for (auto& v : z) {
                if (spec.activation == Activation::relu) {
                    v = v > 0 ? v : 0;
                } else {
                    v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
                }
            }
        }
        a = std::move(z);
    }
    return a;
}

// scalar loss L = sum(output * weights) for gradient checking
double weighted_sum_loss(const MLPSpec& spec, const ParamSet& params, const Matrix& batch, const Matrix& weights) {
    return (forward(spec, params, batch).cwiseProduct(weights)).sum();
}

// relu is non-differentiable at 0; the FD oracle is only valid away from the
// kink, so draws are rejected until every hidden preactivation clears a margin
bool kink_free(const MLPSpec& spec, const ParamSet& params, const Matrix& batch) {
    if (spec.activation != Activation::relu) return true;
    const ForwardTrace trace = forward_trace(spec, params, batch);
    for (size_t l = 0; l + 1 < trace.preactivations.size(); ++l)
        if (trace.preactivations[l].cwiseAbs().minCoeff() < 1e-3) return false;
    return true;
}

void check_gradients(const MLPSpec& spec, uint64_t seed) {
    Rng rng(seed);
    ParamSet params;
    Matrix batch;
    for (uint64_t attempt = 0;; ++attempt) {
        params = init_params(spec, mix_seed(seed, attempt));
        for (auto& v : params.values) v += 0.05 * rng.normal();  // break exact-zero biases
        batch = random_matrix(3, spec.input_dim(), rng);
        if (kink_free(spec, params, batch)) break;
        REQUIRE(attempt < 100);
    }
    const Matrix weights = random_matrix(3, spec.output_dim(), rng);

    const Gradients g = backward(spec, params, batch, weights);

    const double h = 1e-5;
    for (size_t p = 0; p < params.values.size(); ++p) {
        ParamSet pp = params;
        pp.values[p] += h;
        const double up = weighted_sum_loss(spec, pp, batch, weights);
        pp.values[p] -= 2 * h;
        const double dn = weighted_sum_loss(spec, pp, batch, weights);
        const double fd = (up - dn) / (2 * h);
        const double err = std::abs(g.params[p] - fd);
        const double tol = std::max(1e-7, 1e-4 * std::abs(fd));
        CHECK_MESSAGE(err <= tol, "param ", p, ": analytic ", g.params[p], " vs fd ", fd);
    }
    // input gradients against the same oracle
    for (int r = 0; r < batch.rows(); ++r) {
        for (int c = 0; c < batch.cols(); ++c) {
            Matrix bp = batch;
            bp(r, c) += h;
            const double up = weighted_sum_loss(spec, params, bp, weights);
            bp(r, c) -= 2 * h;
            const double dn = weighted_sum_loss(spec, params, bp, weights);
            const double fd = (up - dn) / (2 * h);
            const double err = std::abs(g.inputs(r, c) - fd);
            CHECK(err <= std::max(1e-7, 1e-4 * std::abs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("forward: zero parameters give zero output") {
    MLPSpec spec{{3, 4, 2}, Activation::gelu};
    ParamSet params;
    params.values.assign(static_cast<size_t>(spec.param_count()), 0.0);
    Rng rng(1);
    const Matrix out = forward(spec, params, random_matrix(5, 3, rng));
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: identity-wired relu net reproduces positive inputs") {
    MLPSpec spec{{2, 2, 2}, Activation::relu};
    ParamSet params;
    params.values.assign(static_cast<size_t>(spec.param_count()), 0.0);
    // both layers: W = I, b = 0
    params.values[0] = 1.0;  // layer 0 row-major 2x2
    params.values[3] = 1.0;
    params.values[6] = 1.0;  // layer 1
    params.values[9] = 1.0;
    Matrix batch(2, 2);
    batch << 0.3, 1.7, 2.0, 0.25;
    const Matrix out = forward(spec, params, batch);
    CHECK(out == batch);
}

TEST_CASE("forward: matches an independent scalar-loop computation") {
    MLPSpec spec{{2, 4, 1}, Activation::gelu};
    const ParamSet params = init_params(spec, 99);
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix batch = random_matrix(1, 2, rng);
        const Matrix out = forward(spec, params, batch);
        const auto naive = naive_forward(spec, params, {batch(0, 0), batch(0, 1)});
        CHECK(out(0, 0) == doctest::Approx(naive[0]).epsilon(1e-12));
    }
}

TEST_CASE("forward: shape mismatch is an error") {
    MLPSpec spec{{3, 4, 2}, Activation::gelu};
    const ParamSet params = init_params(spec, 0);
    Rng rng(1);
    CHECK_THROWS_AS(forward(spec, params, random_matrix(2, 4, rng)), Error);
}

TEST_CASE("forward: bit-reproducible") {
    MLPSpec spec{{4, 16, 16, 3}, Activation::gelu};
    const ParamSet params = init_params(spec, 5);
    Rng rng(8);
    const Matrix batch = random_matrix(7, 4, rng);
    const Matrix a = forward(spec, params, batch);
    const Matrix b = forward(spec, params, batch);
    CHECK(a == b);
}

TEST_CASE("backward: relu blocks gradient at negative preactivations") {
    MLPSpec spec{{1, 1, 1}, Activation::relu};
    ParamSet params;
    params.values = {1.0, -5.0, 1.0, 0.0};  // w0=1, b0=-5 (negative preact for small inputs), w1=1, b1=0
    Matrix batch(1, 1);
    batch << 1.0;
    Matrix upstream(1, 1);
    upstream << 1.0;
    const Gradients g = backward(spec, params, batch, upstream);
    CHECK(g.params[0] == 0.0);  // dL/dw0 through the dead relu
    CHECK(g.inputs(0, 0) == 0.0);
}

TEST_CASE("backward: gradients match central finite differences") {
    check_gradients(MLPSpec{{2, 5, 3}, Activation::gelu}, 11);
    check_gradients(MLPSpec{{3, 4, 4, 2}, Activation::gelu}, 12);
    check_gradients(MLPSpec{{2, 6, 1}, Activation::relu}, 13);
    check_gradients(MLPSpec{{4, 3, 3, 3, 2}, Activation::relu}, 14);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    MLPSpec spec{{2, 3, 1}, Activation::gelu};
    ParamSet params = init_params(spec, 2);
    const ParamSet before = params;
    AdamState adam = make_adam(spec.param_count(), 1e-3);
    adam_step(adam, params, std::vector<double>(params.values.size(), 0.0));
    CHECK(params.values == before.values);
    CHECK(adam.step_count == 1);
}

TEST_CASE("adam: first step is approximately -lr * sign(g)") {
    // bias correction makes mhat/sqrt(vhat) = sign(g) up to eps at t=1
    MLPSpec spec{{2, 3, 1}, Activation::gelu};
    ParamSet params = init_params(spec, 4);
    const ParamSet before = params;
    AdamState adam = make_adam(spec.param_count(), 1e-3);
    std::vector<double> grads(params.values.size());
    Rng rng(17);
    for (auto& g : grads) g = rng.normal();
    adam_step(adam, params, grads);
    for (size_t i = 0; i < grads.size(); ++i) {
        const double delta = params.values[i] - before.values[i];
        const double expected = -adam.lr * (grads[i] > 0 ? 1.0 : -1.0);
        CHECK(delta == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("adam: two steps reproduce a hand-computed sequence") {
    // scalar spreadsheet oracle: lr=0.1, b1=0.9, b2=0.999, eps=1e-8, g=0.5, 0.5
    MLPSpec spec{{1, 1, 1}, Activation::relu};
    ParamSet params;
    params.values = {1.0, 0.0, 1.0, 0.0};
    AdamState adam = make_adam(4, 0.1);
    const std::vector<double> grads = {0.5, 0.5, 0.5, 0.5};

    double m = 0, v = 0, p = 1.0;
    for (int t = 1; t <= 2; ++t) {
        m = 0.9 * m + 0.1 * 0.5;
        v = 0.999 * v + 0.001 * 0.25;
        const double mhat = m / (1 - std::pow(0.9, t));
        const double vhat = v / (1 - std::pow(0.999, t));
        p -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    }

    adam_step(adam, params, grads);
    adam_step(adam, params, grads);
    CHECK(params.values[0] == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("params file round-trips bitwise and validates") {
    MLPSpec spec{{3, 8, 8, 2}, Activation::gelu};
    const ParamSet params = init_params(spec, 21);
    const std::string path = tmp_path("ts_params.bin");
    save_params(spec, params, path);
    const auto [spec2, params2] = load_params(path);
    CHECK(spec2.layer_dims == spec.layer_dims);
    CHECK(params2.values == params.values);

    Rng rng(22);
    const Matrix batch = random_matrix(4, 3, rng);
    CHECK(forward(spec, params, batch) == forward(spec2, params2, batch));

    // truncated payload must be rejected
    const std::string blob = read_file(path);
    write_file(path, blob.substr(0, blob.size() - 9));
    CHECK_THROWS_AS(load_params(path), IoError);
}

TEST_CASE("init: kaiming limit respected and per-layer streams differ") {
    MLPSpec spec{{16, 16, 16}, Activation::relu};
    const ParamSet params = init_params(spec, 33);
    const double limit = std::sqrt(6.0 / 16.0);
    for (int i = 0; i < 16 * 16; ++i) {
        CHECK(std::abs(params.values[static_cast<size_t>(i)]) <= limit);
        // bias block of layer 0 stays zero
    }
    for (int i = 0; i < 16; ++i) CHECK(params.values[static_cast<size_t>(16 * 16 + i)] == 0.0);
    // layers are not identical copies
    bool differs = false;
    const size_t l1 = static_cast<size_t>(17 * 16);
    for (int i = 0; i < 16 * 16 && !differs; ++i)
        differs = params.values[static_cast<size_t>(i)] != params.values[l1 + static_cast<size_t>(i)];
    CHECK(differs);
}
