#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "trajstitch/diffusion.hpp"
#include "trajstitch/errors.hpp"
#include "trajstitch/jsonio.hpp"

using namespace trajstitch;
using namespace trajstitch::diffusion;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// minimal hand-built model over H x D sequences; zero params unless trained
NoiseModel make_model(int horizon, int state_dim, int diffusion_steps, uint64_t seed, bool zero_params = false) {
    NoiseModel m;
    m.horizon = horizon;
    m.state_dim = state_dim;
    m.schedule = make_schedule(diffusion_steps, ScheduleKind::cosine);
    m.spec.layer_dims = {horizon * state_dim + m.time_dim, 32, 32, horizon * state_dim};
    m.spec.activation = nn::Activation::gelu;
    m.params = zero_params ? nn::ParamSet{std::vector<double>(static_cast<size_t>(m.spec.param_count()), 0.0),
                                          "kaiming_uniform"}
                           : nn::init_params(m.spec, seed);
    m.normalizer = Normalizer::identity(state_dim);
    m.trained = true;
    return m;
}

nn::AdamState train_toy(NoiseModel& model, const std::vector<nn::Matrix>& data, int steps, int batch, uint64_t seed) {
    nn::AdamState adam = nn::make_adam(model.spec.param_count(), 1e-3);
    Rng rng(seed);
    Rng pick(seed + 1);
    for (int s = 0; s < steps; ++s) {
        std::vector<nn::Matrix> chunk;
        for (int b = 0; b < batch; ++b)
            chunk.push_back(data[static_cast<size_t>(pick.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))]);
        std::vector<double> grads;
        noise_loss(model, chunk, rng, &grads);
        nn::adam_step(adam, model.params, grads);
    }
    model.trained = true;
    return adam;
}

double energy_distance(const std::vector<Eigen::VectorXd>& xs, const std::vector<Eigen::VectorXd>& ys) {
    auto mean_cross = [](const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
        double acc = 0.0;
        for (const auto& x : a)
            for (const auto& y : b) acc += (x - y).norm();
        return acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
    };
    return 2.0 * mean_cross(xs, ys) - mean_cross(xs, xs) - mean_cross(ys, ys);
}

}  // namespace

TEST_CASE("make_schedule: empty product convention, running product, posterior variance") {
    for (const auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
        const DiffusionSchedule s = make_schedule(50, kind);
        CHECK(s.abar(0) == 1.0);
        double prod = 1.0;
        for (int i = 1; i <= 50; ++i) {
            CHECK(s.beta(i) > 0.0);
            CHECK(s.beta(i) < 1.0);
            prod *= 1.0 - s.beta(i);
            CHECK(s.abar(i) == doctest::Approx(prod).epsilon(1e-14));
            CHECK(s.abar(i) < s.abar(i - 1));  // strictly decreasing
            const double expected_var = s.beta(i) * (1.0 - s.abar(i - 1)) / (1.0 - s.abar(i));
            CHECK(s.posterior_var[static_cast<size_t>(i - 1)] == doctest::Approx(expected_var).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(make_schedule(0), ConfigError);
}

TEST_CASE("make_schedule: alpha-bar running product by hand") {
    // betas {0.1, 0.2} imply abar_2 = 0.9 * 0.8 = 0.72
    DiffusionSchedule s;
    s.steps = 2;
    s.betas = {0.1, 0.2};
    s.alphas_bar = {1.0, 0.9, 0.9 * 0.8};
    CHECK(s.abar(2) == doctest::Approx(0.72));
    // and q_sample consumes exactly that entry
    nn::Matrix tau0(1, 1), eps(1, 1);
    tau0 << 1.0;
    eps << 0.0;
    CHECK(q_sample(s, tau0, 2, eps)(0, 0) == doctest::Approx(std::sqrt(0.72)));
}

TEST_CASE("make_schedule: cosine M=1000 alpha-bar strictly decreasing") {
    const DiffusionSchedule s = make_schedule(1000, ScheduleKind::cosine);
    for (int i = 1; i <= 1000; ++i) CHECK(s.abar(i) < s.abar(i - 1));
    CHECK(s.abar(1000) < 1e-3);  // ends near pure noise
}

TEST_CASE("q_sample: hand arithmetic at abar = 0.25") {
    DiffusionSchedule s;
    s.steps = 1;
    s.betas = {0.75};
    s.alphas_bar = {1.0, 0.25};
    nn::Matrix tau0(1, 1), eps(1, 1);
    tau0 << 1.0;
    eps << 2.0;
    // sqrt(0.25) * 1 + sqrt(0.75) * 2 = 0.5 + 1.7320508... = 2.2320508...
    CHECK(q_sample(s, tau0, 1, eps)(0, 0) == doctest::Approx(2.2320508075688772).epsilon(1e-15));
    CHECK_THROWS_AS(q_sample(s, tau0, 0, eps), Error);
    CHECK_THROWS_AS(q_sample(s, tau0, 2, eps), Error);
    nn::Matrix bad(2, 1);
    CHECK_THROWS_AS(q_sample(s, tau0, 1, bad), Error);
}

TEST_CASE("iterated single-step noising matches the closed form (Monte Carlo)") {
    const DiffusionSchedule s = make_schedule(64, ScheduleKind::cosine);
    Rng rng(31);
    const double tau0 = 0.8;
    for (const int i : {3, 17, 50}) {
        const int n = 10000;
        double sum = 0.0, sumsq = 0.0;
        for (int rep = 0; rep < n; ++rep) {
            double x = tau0;
            for (int step = 1; step <= i; ++step)
                x = std::sqrt(1.0 - s.beta(step)) * x + std::sqrt(s.beta(step)) * rng.normal();
            sum += x;
            sumsq += x * x;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        const double expected_mean = std::sqrt(s.abar(i)) * tau0;
        const double expected_var = 1.0 - s.abar(i);
        const double sigma_mean = std::sqrt(expected_var / n);
        const double sigma_var = expected_var * std::sqrt(2.0 / (n - 1));
        CHECK(std::abs(mean - expected_mean) <= 3.0 * sigma_mean);
        CHECK(std::abs(var - expected_var) <= 3.0 * sigma_var);
    }
}

TEST_CASE("noise_loss: zero model recovers E||eps||^2 = H * state_dim") {
    NoiseModel m = make_model(3, 2, 100, 0, /*zero_params=*/true);
    Rng rng(5);
    std::vector<nn::Matrix> batch(4096, nn::Matrix::Zero(3, 2));
    const double loss = noise_loss(m, batch, rng);
    const double dof = 3.0 * 2.0;
    const double sigma = std::sqrt(2.0 * dof / 4096.0);
    CHECK(std::abs(loss - dof) <= 3.0 * sigma);
}

TEST_CASE("noise_loss: matches a replayed-draw scalar evaluation") {
    NoiseModel m = make_model(2, 2, 10, 7);
    const uint64_t seed = 1234;
    nn::Matrix tau0(2, 2);
    tau0 << 0.3, -0.4, 0.1, 0.9;

    // replay the sampling contract: one timestep draw, then H x D normals
    Rng replay(seed);
    const int i = static_cast<int>(replay.uniform_int(1, m.schedule.steps));
    nn::Matrix eps(2, 2);
    for (int t = 0; t < 2; ++t)
        for (int d = 0; d < 2; ++d) eps(t, d) = replay.normal();
    const nn::Matrix noisy = q_sample(m.schedule, tau0, i, eps);
    nn::Matrix input(1, 4 + m.time_dim);
    input << noisy(0, 0), noisy(0, 1), noisy(1, 0), noisy(1, 1), timestep_embedding(i, m.time_dim).transpose();
    const nn::Matrix pred = nn::forward(m.spec, m.params, input);
    double expected = 0.0;
    for (int c = 0; c < 4; ++c) {
        const double diff = eps(c / 2, c % 2) - pred(0, c);
        expected += diff * diff;
    }

    Rng rng(seed);
    CHECK(noise_loss(m, {tau0}, rng) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("noise_loss: training memorizes a single sequence") {
    NoiseModel m = make_model(2, 2, 50, 3);
    nn::Matrix tau0(2, 2);
    tau0 << 1.0, 2.0, 3.0, 4.0;
    m.normalizer.scale = {4.0, 4.0};
    Rng eval_rng(77);
    std::vector<nn::Matrix> batch(64, tau0);
    const double before = noise_loss(m, batch, eval_rng);
    train_toy(m, {tau0}, 400, 32, 9);
    const double after = noise_loss(m, batch, eval_rng);
    CHECK(after < 0.5 * before);
}

TEST_CASE("ddpm_sample: conditioning clamps are bit-exact") {
    NoiseModel m = make_model(5, 2, 30, 11);
    CondSpec cond(2);
    cond[0].index = 0;
    cond[0].value = Eigen::Vector2d(1.25, -0.75);
    cond[1].index = 4;
    cond[1].value = Eigen::Vector2d(0.5, 2.5);
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        const nn::Matrix out = ddpm_sample(m, rng, cond);
        CHECK(out.rows() == 5);
        CHECK(out.cols() == 2);
        CHECK(out(0, 0) == 1.25);
        CHECK(out(0, 1) == -0.75);
        CHECK(out(4, 0) == 0.5);
        CHECK(out(4, 1) == 2.5);
    }
}

TEST_CASE("ddpm_sample: M=1 zero model equals the hand formula") {
    NoiseModel m = make_model(1, 1, 1, 0, /*zero_params=*/true);
    m.schedule = make_schedule(1, ScheduleKind::linear);
    const uint64_t seed = 99;
    Rng replay(seed);
    const double prior = replay.normal();
    const double expected = prior / std::sqrt(1.0 - m.schedule.beta(1));
    Rng rng(seed);
    const nn::Matrix out = ddpm_sample(m, rng);
    CHECK(out(0, 0) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("ddpm_sample: untrained model and bad conditioning are rejected") {
    NoiseModel m = make_model(4, 2, 10, 1);
    m.trained = false;
    Rng rng(1);
    CHECK_THROWS_AS(ddpm_sample(m, rng), Error);
    m.trained = true;
    CondSpec bad_index(1);
    bad_index[0].index = 4;
    bad_index[0].value = Eigen::Vector2d(0, 0);
    CHECK_THROWS_AS(ddpm_sample(m, rng, bad_index), Error);
    CondSpec dup(2);
    dup[0].index = 1;
    dup[0].value = Eigen::Vector2d(0, 0);
    dup[1].index = 1;
    dup[1].value = Eigen::Vector2d(1, 1);
    CHECK_THROWS_AS(ddpm_sample(m, rng, dup), Error);
}

TEST_CASE("ddim_sample: deterministic given the seed, clamps exact, n_steps validated") {
    NoiseModel m = make_model(4, 2, 40, 21);
    CondSpec cond(2);
    cond[0].index = 0;
    cond[0].value = Eigen::Vector2d(0.1, 0.2);
    cond[1].index = 3;
    cond[1].value = Eigen::Vector2d(-0.3, 0.4);

    Rng r1(5), r2(5);
    const nn::Matrix a = ddim_sample(m, 10, r1, cond);
    const nn::Matrix b = ddim_sample(m, 10, r2, cond);
    CHECK(a == b);
    CHECK(a(0, 0) == 0.1);
    CHECK(a(3, 1) == 0.4);

    Rng r3(6);
    const nn::Matrix full = ddim_sample(m, 40, r3, cond);  // n_steps == M
    CHECK(full(0, 0) == 0.1);
    CHECK(full(3, 0) == -0.3);

    CHECK_THROWS_AS(ddim_sample(m, 0, r3), Error);
    CHECK_THROWS_AS(ddim_sample(m, 41, r3), Error);
}

TEST_CASE("samplers target the data distribution, ddim agrees with ddpm (energy distance)") {
    // toy target: two-state 1-cell sequences near a fixed point
    NoiseModel m = make_model(2, 1, 50, 17);
    m.normalizer.scale = {2.0};
    Rng data_rng(23);
    std::vector<nn::Matrix> data;
    const double mu0 = 1.2, mu1 = -0.6;
    for (int i = 0; i < 256; ++i) {
        nn::Matrix w(2, 1);
        w << mu0 + 0.1 * data_rng.normal(), mu1 + 0.1 * data_rng.normal();
        data.push_back(w);
    }
    train_toy(m, data, 1500, 32, 29);

    auto draw = [&](bool ddim, uint64_t seed, int n) {
        std::vector<Eigen::VectorXd> out;
        Rng rng(seed);
        for (int i = 0; i < n; ++i) {
            const nn::Matrix s = ddim ? ddim_sample(m, 10, rng) : ddpm_sample(m, rng);
            Eigen::VectorXd v(2);
            v << s(0, 0), s(1, 0);
            out.push_back(v);
        }
        return out;
    };

    // sample mean approaches the data mean (not the prior's zero)
    const auto ddpm_draws = draw(false, 41, 400);
    double m0 = 0, m1 = 0;
    for (const auto& v : ddpm_draws) {
        m0 += v[0];
        m1 += v[1];
    }
    m0 /= 400;
    m1 /= 400;
    CHECK(std::abs(m0 - mu0) < 0.25);
    CHECK(std::abs(m1 - mu1) < 0.25);

    // null calibration: energy distance between independent ddpm batches
    double null_max = 0.0;
    for (int rep = 0; rep < 10; ++rep)
        null_max = std::max(null_max, energy_distance(draw(false, 100 + 2 * rep, 200), draw(false, 101 + 2 * rep, 200)));
    const auto cross = energy_distance(draw(true, 301, 200), draw(false, 302, 200));
    CHECK(cross <= std::max(2.0 * null_max, 0.05));
}

TEST_CASE("normalizer round-trips are bitwise both ways") {
    Rng rng(9);
    nn::Matrix data(200, 3);
    for (int r = 0; r < 200; ++r)
        for (int c = 0; c < 3; ++c) data(r, c) = 5.0 * rng.normal() + c;
    const Normalizer norm = Normalizer::fit(data);
    nn::Matrix x(50, 3);
    for (int r = 0; r < 50; ++r)
        for (int c = 0; c < 3; ++c) x(r, c) = rng.normal() * 3.0;
    CHECK(norm.normalize(norm.denormalize(x)) == x);
    CHECK(norm.denormalize(norm.normalize(x)) == x);
    for (double s : norm.scale) {
        int exp;
        const double mant = std::frexp(s, &exp);
        CHECK(mant == 0.5);  // power of two
    }
}

TEST_CASE("trainer: windows, resume bitwise, checkpoint round-trip") {
    const maze::Dataset ds = maze::generate_stitch_dataset(maze::builtin_maze("open5"), 6, 4, 40, 3);
    DiffTrainConfig cfg;
    cfg.diffusion_steps = 30;
    cfg.hidden = {16, 16};
    cfg.batch_size = 8;
    cfg.horizon = 6;
    cfg.jump = 2;
    cfg.seed = 5;

    DiffusionTrainer full(ds, cfg);
    for (int i = 0; i < 30; ++i) full.train_step();

    DiffusionTrainer half(ds, cfg);
    for (int i = 0; i < 15; ++i) half.train_step();
    const std::string state = half.serialize_state();
    DiffusionTrainer resumed(ds, cfg);
    resumed.restore_state(state);
    for (int i = 0; i < 15; ++i) resumed.train_step();
    CHECK(resumed.model().params.values == full.model().params.values);

    const std::string path = tmp_path("ts_noise_model.bin");
    save_noise_model(full.model(), path);
    const NoiseModel loaded = load_noise_model(path);
    CHECK(loaded.params.values == full.model().params.values);
    CHECK(loaded.horizon == 6);
    CHECK(loaded.jump == 2);
    CHECK(loaded.trained);
    CHECK(loaded.schedule.steps == 30);

    // too-short trajectories are rejected
    DiffTrainConfig big = cfg;
    big.horizon = 200;
    CHECK_THROWS_AS(DiffusionTrainer(ds, big), Error);
}
