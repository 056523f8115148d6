#include "fedema/errors.hpp"
#include "fedema/nn.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fedema;
using nn::ParamVector;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = g(rng);
    return m;
}

Matrix random_probs(Eigen::Index rows, Eigen::Index classes, Rng& rng) {
    return nn::softmax_rows(random_matrix(rows, classes, rng), 1.0);
}

}  // namespace

TEST_CASE("forward of a zero model is all zeros") {
    ParamVector m(nn::mlp_shapes(3, 4, 2));
    Matrix x = Matrix::Random(5, 3);
    CHECK(nn::forward(m, x).isZero(0.0));
}

TEST_CASE("forward with identity weights passes the input through") {
    ParamVector m(nn::mlp_shapes(2, 0, 2));
    m.weight(0) = Matrix::Identity(2, 2);
    Matrix x(1, 2);
    x << 1.0, 0.0;
    Matrix z = nn::forward(m, x);
    CHECK(z(0, 0) == 1.0);
    CHECK(z(0, 1) == 0.0);
}

TEST_CASE("forward matches a loop-based matrix product") {
    Rng rng(47);
    for (std::size_t hidden : {std::size_t{0}, std::size_t{7}}) {
        ParamVector m = nn::init_mlp(4, hidden, 3, rng);
        for (auto& b : m.values()) b += 0.01;
        Matrix x = random_matrix(3, 4, rng);
        Matrix z = nn::forward(m, x);
        auto ref = oracle::matmul_forward(m, oracle::to_grid(x));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) CHECK(z(r, c) == doctest::Approx(ref[r][c]).epsilon(1e-12));
    }
}

TEST_CASE("forward rejects a feature width mismatch") {
    ParamVector m(nn::mlp_shapes(3, 0, 2));
    CHECK_THROWS_AS(nn::forward(m, Matrix::Zero(2, 4)), ConfigError);
}

TEST_CASE("glorot init stays inside its bound and zeroes biases") {
    Rng rng(3);
    ParamVector m = nn::init_mlp(16, 32, 10, rng);
    const double a0 = std::sqrt(6.0 / (16 + 32));
    CHECK(m.weight(0).cwiseAbs().maxCoeff() < a0);
    CHECK(m.bias(0).isZero(0.0));
    CHECK(m.bias(1).isZero(0.0));
    CHECK(m.size() == ParamVector::count_for(nn::mlp_shapes(16, 32, 10)));
}

TEST_CASE("softmax_temp closed forms") {
    std::vector<double> z0{0.0, 0.0};
    for (double T : {0.5, 1.0, 7.0}) {
        auto p = nn::softmax_temp(z0, T);
        CHECK(p[0] == doctest::Approx(0.5));
        CHECK(p[1] == doctest::Approx(0.5));
    }
    std::vector<double> z1{std::log(3.0), 0.0};
    auto p = nn::softmax_temp(z1, 1.0);
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax_temp agrees with an extended-precision evaluation") {
    std::vector<double> z{10.0, 0.0, -5.0};
    auto p = nn::softmax_temp(z, 5.0);
    auto ref = oracle::softmax_ld(z, 5.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - static_cast<double>(ref[i])) < 1e-15);
}

TEST_CASE("softmax_temp input checks") {
    std::vector<double> z{1.0, 2.0};
    CHECK_THROWS_AS(nn::softmax_temp(z, 0.0), ParameterError);
    CHECK_THROWS_AS(nn::softmax_temp(z, -1.0), ParameterError);
    std::vector<double> bad{1.0, NAN};
    CHECK_THROWS_AS(nn::softmax_temp(bad, 1.0), InputError);
    std::vector<double> huge{1e308, -1e308};
    CHECK(nn::on_simplex(nn::softmax_temp(huge, 0.01).probs()));
}

TEST_CASE("kl_div values") {
    auto p = nn::ProbVector::from({0.2, 0.3, 0.5});
    CHECK(nn::kl_div(p, p) == doctest::Approx(0.0));
    auto one = nn::ProbVector::from({1.0, 0.0});
    auto half = nn::ProbVector::from({0.5, 0.5});
    CHECK(nn::kl_div(one, half) == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
    auto a = nn::ProbVector::from({0.3, 0.7});
    auto b = nn::ProbVector::from({0.6, 0.4});
    CHECK(nn::kl_div(a, b) == doctest::Approx(oracle::kl_terms({0.3, 0.7}, {0.6, 0.4})).epsilon(1e-14));
    CHECK(nn::kl_div(half, one) > 10.0);
    CHECK(std::isfinite(nn::kl_div(half, one)));
    auto three = nn::ProbVector::from({0.2, 0.3, 0.5});
    CHECK_THROWS_AS(nn::kl_div(a, three), InputError);
}

TEST_CASE("ProbVector rejects vectors off the simplex") {
    CHECK_THROWS_AS(nn::ProbVector::from({0.5, 0.6}), InputError);
    CHECK_THROWS_AS(nn::ProbVector::from({1.1, -0.1}), InputError);
    CHECK_THROWS_AS(nn::ProbVector::from({}), InputError);
    CHECK_NOTHROW(nn::ProbVector::from({0.5, 0.5 + 5e-10}));
}

TEST_CASE("cross-entropy and distillation gradients match central differences") {
    Rng rng(11);
    std::uniform_int_distribution<int> pick_h(0, 5), pick_n(1, 6);
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t d = 3, classes = 4;
        const std::size_t hidden = static_cast<std::size_t>(pick_h(rng));
        const auto n = static_cast<Eigen::Index>(pick_n(rng));
        ParamVector u = nn::init_mlp(d, hidden, classes, rng);
        for (auto& v : u.values()) v += 0.05 * std::normal_distribution<double>(0, 1)(rng);
        ParamVector anchor = nn::init_mlp(d, hidden, classes, rng);
        Matrix x = random_matrix(n, static_cast<Eigen::Index>(d), rng);
        Matrix teacher = random_probs(n, static_cast<Eigen::Index>(classes), rng);
        std::vector<int> y(static_cast<std::size_t>(n));
        for (auto& v : y) v = std::uniform_int_distribution<int>(0, classes - 1)(rng);
        const double T = 0.5 + 4.5 * std::uniform_real_distribution<double>()(rng);
        const double mu = 0.3;

        ParamVector g;
        nn::cross_entropy(u, x, y, &g);
        auto ce = [&](const std::vector<double>& w) {
            return nn::cross_entropy(ParamVector(u.shapes(), w), x, y);
        };
        std::vector<double> w0(u.values().begin(), u.values().end());
        CHECK(oracle::max_rel_err(g.values(), oracle::numeric_grad(ce, w0)) < 1e-4);

        nn::kd_objective(u, x, teacher, T, mu, anchor, &g);
        auto kd = [&](const std::vector<double>& w) {
            return nn::kd_objective(ParamVector(u.shapes(), w), x, teacher, T, mu, anchor);
        };
        CHECK(oracle::max_rel_err(g.values(), oracle::numeric_grad(kd, w0)) < 1e-4);
    }
}

TEST_CASE("kd_objective is a sum over samples plus the anchor penalty") {
    Rng rng(5);
    ParamVector u = nn::init_mlp(3, 4, 3, rng);
    ParamVector anchor = nn::init_mlp(3, 4, 3, rng);
    Matrix x = random_matrix(4, 3, rng);
    Matrix t = random_probs(4, 3, rng);
    Matrix q = nn::softmax_rows(nn::forward(u, x), 2.0);
    double expect = 0.0;
    for (int r = 0; r < 4; ++r) {
        std::vector<double> p(t.row(r).data(), t.row(r).data() + 3), qq(q.row(r).data(), q.row(r).data() + 3);
        expect += oracle::kl_terms(p, qq);
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) sq += std::pow(u.values()[i] - anchor.values()[i], 2);
    expect += 0.5 * 0.7 * sq;
    CHECK(nn::kd_objective(u, x, t, 2.0, 0.7, anchor) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("local_train edge cases") {
    Rng rng(2);
    ParamVector m = nn::init_mlp(2, 3, 2, rng);
    LabeledDataset data;
    data.features = random_matrix(10, 2, rng);
    data.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    data.classes = 2;

    nn::LocalTrainOptions none{.epochs = 0};
    CHECK(nn::local_train(m, data, none, rng) == m);
    CHECK_THROWS_AS(nn::local_train(m, data, {.epochs = -1}, rng), ParameterError);
    CHECK_THROWS_AS(nn::local_train(m, data, {.epochs = 1, .lr = 0.0}, rng), ParameterError);

    ParamVector anchor = nn::init_mlp(2, 3, 2, rng);
    nn::LocalTrainOptions prox{.epochs = 3, .lr = 1e-6, .batch_size = 2, .prox_mu = 1e6, .prox_anchor = &anchor};
    ParamVector out = nn::local_train(m, data, prox, rng);
    CHECK((out.flat() - anchor.flat()).norm() < 1e-3);
}

TEST_CASE("one SGD step on a two-sample batch follows the numeric gradient") {
    Rng rng(9);
    ParamVector m = nn::init_mlp(3, 5, 3, rng);
    LabeledDataset data;
    data.features = random_matrix(2, 3, rng);
    data.labels = {2, 0};
    data.classes = 3;
    const double lr = 0.1;
    ParamVector out = nn::local_train(m, data, {.epochs = 1, .lr = lr, .batch_size = 2}, rng);
    auto f = [&](const std::vector<double>& w) {
        return nn::cross_entropy(ParamVector(m.shapes(), w), data.features, data.labels);
    };
    auto g = oracle::numeric_grad(f, std::vector<double>(m.values().begin(), m.values().end()));
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(out.values()[i] == doctest::Approx(m.values()[i] - lr * g[i]).epsilon(1e-7));
}

TEST_CASE("server_kd reductions") {
    Rng rng(4);
    ParamVector w = nn::init_mlp(3, 4, 3, rng);
    Matrix x = random_matrix(6, 3, rng);
    Matrix t = random_probs(6, 3, rng);
    CHECK(nn::server_kd(w, x, t, {.lr = 0.0}) == w);
    CHECK_THROWS_AS(nn::server_kd(w, Matrix(0, 3), Matrix(0, 3), {}), ProtocolError);

    ParamVector free = nn::server_kd(w, x, t, {.mu_anchor = 0.0, .steps = 20, .lr = 0.01});
    ParamVector held = nn::server_kd(w, x, t, {.mu_anchor = 10.0, .steps = 20, .lr = 0.01});
    CHECK((held.flat() - w.flat()).norm() < (free.flat() - w.flat()).norm());
}

TEST_CASE("server_kd lowers the distillation objective") {
    Rng rng(6);
    ParamVector w = nn::init_mlp(4, 8, 3, rng);
    Matrix x = random_matrix(20, 4, rng);
    Matrix t = random_probs(20, 3, rng);
    ParamVector u = nn::server_kd(w, x, t, {.temperature = 2.0, .mu_anchor = 1e-4, .steps = 30, .lr = 0.05});
    CHECK(nn::kd_objective(u, x, t, 2.0, 1e-4, w) < nn::kd_objective(w, x, t, 2.0, 1e-4, w));
}
