#include <doctest.h>

#include "hydroseq/lstm.hpp"
#include "test_support.hpp"

#include <cmath>
#include <limits>

using namespace hydroseq;
using hydroseq::testing::random_matrix;
using hydroseq::testing::sample_from;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Scalar (H = F = 1) LSTM evaluated gate by gate.
struct ScalarCell {
    double wx[4], wh[4], b[4], w_out, b_out;

    double run(const std::vector<double>& xs) const {
        double h = 0.0, c = 0.0;
        for (double x : xs) {
            const double i = logistic(wx[0] * x + wh[0] * h + b[0]);
            const double f = logistic(wx[1] * x + wh[1] * h + b[1]);
            const double g = std::tanh(wx[2] * x + wh[2] * h + b[2]);
            const double o = logistic(wx[3] * x + wh[3] * h + b[3]);
            c = f * c + i * g;
            h = o * std::tanh(c);
        }
        return w_out * h + b_out;
    }

    LstmParams params() const {
        LstmParams p = LstmParams::zeros(1, 1);
        for (int k = 0; k < 4; ++k) {
            p.wx(k, 0) = wx[k];
            p.wh(k, 0) = wh[k];
            p.b(k) = b[k];
        }
        p.w_out(0) = w_out;
        p.b_out = b_out;
        return p;
    }
};

LstmParams random_params(Eigen::Index H, Eigen::Index F, std::mt19937_64& gen, double scale = 0.5) {
    LstmParams p = LstmParams::zeros(H, F);
    p.wx = random_matrix(4 * H, F, gen, scale);
    p.wh = random_matrix(4 * H, H, gen, scale);
    p.b = random_matrix(4 * H, 1, gen, scale);
    p.w_out = random_matrix(H, 1, gen, scale);
    p.b_out = random_matrix(1, 1, gen, scale)(0, 0);
    return p;
}

}  // namespace

TEST_CASE("init_params: shapes, forget bias, determinism") {
    const auto a = init_params(2, 3, 42);
    CHECK(a.wx.rows() == 8);
    CHECK(a.wx.cols() == 3);
    CHECK(a.wh.rows() == 8);
    CHECK(a.wh.cols() == 2);
    CHECK(a.b.size() == 8);
    CHECK(a.w_out.size() == 2);
    CHECK(a.b.segment(2, 2).isOnes());
    CHECK(a.b.segment(0, 2).isZero());
    CHECK(a.b.segment(4, 4).isZero());
    CHECK(a.b_out == 0.0);
    CHECK(a == init_params(2, 3, 42));
    CHECK_FALSE(a == init_params(2, 3, 43));

    const auto big = init_params(16, 5, 1);
    const double bound = 1.0 / std::sqrt(16.0);
    CHECK(big.wx.cwiseAbs().maxCoeff() <= bound);
    CHECK(big.wh.cwiseAbs().maxCoeff() <= bound);
    CHECK_THROWS_AS(init_params(0, 3, 1), Error);
}

TEST_CASE("cell_step: closed-form gate evaluations") {
    SUBCASE("all zero") {
        const auto p = LstmParams::zeros(3, 2);
        const auto s = cell_step(p, Eigen::VectorXd::Zero(2), LstmState::zeros(3));
        CHECK(s.h.isZero());
        CHECK(s.c.isZero());
    }
    SUBCASE("saturated cell input") {
        auto p = LstmParams::zeros(1, 1);
        p.b(kCell) = 1e9;
        const auto s = cell_step(p, Eigen::VectorXd::Zero(1), LstmState::zeros(1));
        CHECK(s.c(0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(s.h(0) == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-12));
        CHECK(s.h(0) == doctest::Approx(0.231059).epsilon(1e-6));
    }
    SUBCASE("cell persistence") {
        auto p = LstmParams::zeros(1, 1);
        p.b(kForget) = 1e9;
        p.b(kInput) = -1e9;
        p.b(kOutput) = 1e9;
        LstmState st = LstmState::zeros(1);
        st.c(0) = 0.8;
        const auto s = cell_step(p, Eigen::VectorXd::Zero(1), st);
        CHECK(s.c(0) == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(s.h(0) == doctest::Approx(0.664037).epsilon(1e-6));
        CHECK(st.c(0) == 0.8);
    }
    SUBCASE("non-finite input rejected") {
        const auto p = LstmParams::zeros(1, 1);
        Eigen::VectorXd x(1);
        x(0) = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(cell_step(p, x, LstmState::zeros(1)), Error);
    }
}

TEST_CASE("cell_step: gate ranges for random inputs") {
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 50; ++rep) {
        const auto p = random_params(4, 3, gen, 3.0);
        const Eigen::MatrixXd x = random_matrix(6, 3, gen, 10.0);
        const auto fwd = forward_seq(p, x);
        for (const auto& gates : fwd.trace.gates) {
            const auto i = gates.middleRows(0, 4).array();
            const auto f = gates.middleRows(4, 4).array();
            const auto g = gates.middleRows(8, 4).array();
            const auto o = gates.middleRows(12, 4).array();
            CHECK((i >= 0.0).all());
            CHECK((i <= 1.0).all());
            CHECK((f >= 0.0).all());
            CHECK((f <= 1.0).all());
            CHECK((o >= 0.0).all());
            CHECK((o <= 1.0).all());
            CHECK((g.abs() <= 1.0).all());
        }
    }
}

TEST_CASE("forward_seq: zero params, composition and scalar oracle") {
    SUBCASE("all params zero") {
        const auto p = LstmParams::zeros(4, 2);
        CHECK(forward_seq(p, Eigen::MatrixXd::Ones(5, 2)).prediction == 0.0);
    }
    SUBCASE("L = 1 equals head on one cell_step") {
        std::mt19937_64 gen(3);
        const auto p = random_params(3, 2, gen);
        const Eigen::MatrixXd x = random_matrix(1, 2, gen);
        const auto st = cell_step(p, x.row(0).transpose(), LstmState::zeros(3));
        CHECK(forward_seq(p, x).prediction == doctest::Approx(p.w_out.dot(st.h) + p.b_out).epsilon(1e-15));
    }
    SUBCASE("two-step hand evaluation") {
        const ScalarCell cell{{0.3, -0.2, 0.5, 0.1}, {0.4, 0.25, -0.3, 0.2}, {0.05, 1.0, -0.1, 0.2}, 0.7, -0.15};
        Eigen::MatrixXd x(2, 1);
        x << 0.8, -1.3;
        const double expected = cell.run({0.8, -1.3});
        CHECK(std::abs(forward_seq(cell.params(), x).prediction - expected) < 1e-9);
        CHECK(std::abs(static_cast<double>(reference_prediction(cell.params(), x)) - expected) < 1e-12);
    }
    SUBCASE("batched path agrees with the long-double reference") {
        std::mt19937_64 gen(11);
        const auto p = random_params(5, 3, gen);
        std::vector<WindowSample> batch;
        for (int b = 0; b < 4; ++b) batch.push_back(sample_from(random_matrix(7, 3, gen), 0.0));
        const auto fwd = forward_batch(p, batch);
        for (int b = 0; b < 4; ++b) {
            const auto ref = static_cast<double>(reference_prediction(p, batch[b].inputs()));
            CHECK(std::abs(fwd.predictions(b) - ref) < 1e-12);
            CHECK(fwd.predictions(b) == forward_seq(p, batch[b].inputs()).prediction);
        }
    }
    SUBCASE("determinism") {
        std::mt19937_64 gen(2);
        const auto p = random_params(6, 2, gen);
        const Eigen::MatrixXd x = random_matrix(9, 2, gen);
        CHECK(forward_seq(p, x).prediction == forward_seq(p, x).prediction);
    }
    SUBCASE("errors") {
        const auto p = LstmParams::zeros(2, 2);
        CHECK_THROWS_AS(forward_seq(p, Eigen::MatrixXd::Zero(3, 1)), Error);
        Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 2);
        bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(forward_seq(p, bad), Error);
    }
}

TEST_CASE("mse_loss") {
    const std::vector<double> a{1.0, 2.0}, z{0.0, 0.0}, t{1.0, 3.0};
    CHECK(mse_loss(a, a) == 0.0);
    CHECK(mse_loss(z, t) == doctest::Approx(5.0));
    const std::vector<double> two{2.0};
    CHECK(mse_loss(two, two) == 0.0);
    CHECK_THROWS_AS(mse_loss(a, two), Error);
}

TEST_CASE("backward: analytic head gradient and zero residual") {
    std::mt19937_64 gen(17);
    const auto p = random_params(3, 2, gen);
    std::vector<WindowSample> batch;
    for (int b = 0; b < 3; ++b) batch.push_back(sample_from(random_matrix(4, 2, gen), 0.5 * b - 0.3));
    const auto fwd = forward_batch(p, batch);
    const auto res = backward(p, batch, fwd, std::numeric_limits<double>::infinity());
    double mean_resid = 0.0;
    for (int b = 0; b < 3; ++b) mean_resid += fwd.predictions(b) - batch[b].target;
    mean_resid /= 3.0;
    CHECK(res.grads.b_out == doctest::Approx(2.0 * mean_resid).epsilon(1e-14));

    std::vector<WindowSample> exact;
    for (int b = 0; b < 3; ++b) exact.push_back(sample_from(batch[b].inputs(), fwd.predictions(b)));
    const auto zero = backward(p, exact, forward_batch(p, exact), 1.0);
    CHECK(zero.loss == 0.0);
    CHECK(global_norm(zero.grads) == 0.0);
}

TEST_CASE("backward: batch gradient equals mean of per-sample gradients") {
    std::mt19937_64 gen(23);
    const auto p = random_params(4, 3, gen);
    std::vector<WindowSample> batch;
    for (int b = 0; b < 5; ++b) batch.push_back(sample_from(random_matrix(6, 3, gen), 1.0));
    const double inf = std::numeric_limits<double>::infinity();
    const auto whole = backward(p, batch, forward_batch(p, batch), inf);
    Gradients sum = LstmParams::zeros(4, 3);
    for (const auto& s : batch) {
        const std::vector<WindowSample> one{s};
        const auto g = backward(p, one, forward_batch(p, one), inf);
        auto dst = sum.blocks();
        auto src = g.grads.blocks();
        for (std::size_t k = 0; k < dst.size(); ++k)
            for (std::size_t j = 0; j < dst[k].size(); ++j) dst[k][j] += src[k][j] / 5.0;
    }
    auto a = whole.grads.blocks();
    auto b = sum.blocks();
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t j = 0; j < a[k].size(); ++j) CHECK(a[k][j] == doctest::Approx(b[k][j]).epsilon(1e-10));
}

TEST_CASE("clipping bounds the global norm") {
    std::mt19937_64 gen(31);
    for (int rep = 0; rep < 20; ++rep) {
        const auto p = random_params(5, 2, gen, 2.0);
        std::vector<WindowSample> batch{sample_from(random_matrix(5, 2, gen, 3.0), 25.0)};
        const double clip = 0.1 + 0.1 * rep;
        const auto res = backward(p, batch, forward_batch(p, batch), clip);
        CHECK(global_norm(res.grads) <= clip + 1e-9);
        if (res.grad_norm <= clip) CHECK(global_norm(res.grads) == doctest::Approx(res.grad_norm));
    }
}

TEST_CASE("grad_check: finite-difference oracle") {
    std::mt19937_64 gen(101);
    SUBCASE("H=4 F=3 L=5 random instance") {
        const auto p = random_params(4, 3, gen);
        const auto s = sample_from(random_matrix(5, 3, gen), 1.5);
        CHECK(grad_check(p, s, 1e-5) < 1e-4);
    }
    SUBCASE("20 random instances within bounds") {
        std::uniform_int_distribution<int> H(1, 8), F(1, 6), L(1, 10);
        for (int rep = 0; rep < 20; ++rep) {
            const auto p = random_params(H(gen), F(gen), gen);
            const auto s = sample_from(random_matrix(L(gen), p.features(), gen), 2.0);
            const double err = grad_check(p, s, 1e-5);
            CHECK(err < 1e-4);
        }
    }
    SUBCASE("zero residual gives zero error") {
        const auto p = LstmParams::zeros(3, 2);
        const auto s = sample_from(Eigen::MatrixXd::Ones(4, 2), 0.0);
        CHECK(grad_check(p, s, 1e-5) == 0.0);
    }
    SUBCASE("coarse step is visibly worse") {
        const auto p = random_params(4, 3, gen, 1.0);
        const auto s = sample_from(random_matrix(5, 3, gen), 1.5);
        CHECK(grad_check(p, s, 1e-2) > grad_check(p, s, 1e-5));
    }
}

TEST_CASE("adam_step") {
    TrainConfig cfg;
    SUBCASE("zero gradient leaves params unchanged") {
        std::mt19937_64 gen(1);
        const auto p = random_params(2, 2, gen);
        const auto [np, ns] = adam_step(p, LstmParams::zeros(2, 2), OptimState::zeros_like(p), cfg);
        CHECK(np == p);
        CHECK(ns.t == 1);
    }
    SUBCASE("first step moves by about lr against the gradient sign") {
        const auto p = LstmParams::zeros(1, 1);
        auto g = LstmParams::zeros(1, 1);
        g.b_out = 0.1;
        g.wx(0, 0) = -0.1;
        const auto [np, ns] = adam_step(p, g, OptimState::zeros_like(p), cfg);
        CHECK(np.b_out == doctest::Approx(-1e-3).epsilon(1e-6));
        CHECK(np.wx(0, 0) == doctest::Approx(1e-3).epsilon(1e-6));
        CHECK(np.wh(0, 0) == 0.0);
    }
    SUBCASE("descent on a one-parameter quadratic") {
        for (double lr : {1e-4, 1e-3, 1e-2}) {
            cfg.learning_rate = lr;
            auto p = LstmParams::zeros(1, 1);
            p.b_out = 0.7;
            auto loss = [](double b) { return (b - 3.0) * (b - 3.0); };
            auto g = LstmParams::zeros(1, 1);
            g.b_out = 2.0 * (p.b_out - 3.0);
            const auto [np, ns] = adam_step(p, g, OptimState::zeros_like(p), cfg);
            CHECK(loss(np.b_out) < loss(p.b_out));
        }
    }
    SUBCASE("determinism") {
        std::mt19937_64 gen(9);
        const auto p = random_params(3, 2, gen);
        const auto g = random_params(3, 2, gen);
        const auto a = adam_step(p, g, OptimState::zeros_like(p), cfg);
        const auto b = adam_step(p, g, OptimState::zeros_like(p), cfg);
        CHECK(a.first == b.first);
        CHECK(a.second.m == b.second.m);
        CHECK(a.second.v == b.second.v);
    }
}
