#include "oracles.hpp"
#include "pbc/lin_sys.hpp"
#include "pbc/scenario.hpp"

#include <doctest.h>

using namespace pbc;

TEST_CASE("LinearSystem rejects inconsistent shapes") {
    CHECK_THROWS_AS(LinearSystem<double>(Matrix::Identity(2, 2), Matrix::Ones(3, 1), Matrix::Ones(1, 2)), InputError);
    CHECK_THROWS_AS(LinearSystem<double>(Matrix::Ones(2, 3), Matrix::Ones(2, 1), Matrix::Ones(1, 3)), InputError);
    const LinearSystem<double> ok(Matrix::Identity(2, 2), Matrix::Ones(2, 1), Matrix::Ones(1, 2));
    CHECK(ok.n() == 2);
    CHECK(ok.m() == 1);
    CHECK(ok.p() == 1);
}

TEST_CASE("hovercraft is controllable and observable") {
    const SystemSpec spec = hovercraft_system();
    const LinearSystem<double> sys(spec.A, spec.B, spec.C);
    CHECK(is_controllable(sys));
    CHECK(is_observable(sys));
    const LinearSystem<double> blind(spec.A, spec.B, Matrix::Zero(2, 4));
    CHECK_FALSE(is_observable(blind));
}

TEST_CASE("FIR apply is causal convolution") {
    FirOperator<double> op(1, 1, 2);
    op[0](0, 0) = 1.0;
    op[1](0, 0) = 2.0;
    op[2](0, 0) = -1.0;
    std::vector<Vector> w(4, Vector::Zero(1));
    w[0](0) = 1.0;
    w[2](0) = 3.0;
    const auto y = op.apply(w);
    CHECK(y[0](0) == doctest::Approx(1.0));
    CHECK(y[1](0) == doctest::Approx(2.0));
    CHECK(y[2](0) == doctest::Approx(-1.0 + 3.0));
    CHECK(y[3](0) == doctest::Approx(6.0));
}

TEST_CASE("l1 norm is the largest absolute row sum over taps") {
    FirOperator<double> op(2, 2, 1);
    op[0] << 1, -2, 0, 0.5;
    op[1] << 0, 1, -3, 0;
    CHECK(l1_norm(op) == doctest::Approx(4.0));
    CHECK(l1_norm(2.0 * op) == doctest::Approx(8.0));
}

TEST_CASE("property: the l1 witness attains the norm") {
    oracle::Gen gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int r = gen.integer(1, 3), c = gen.integer(1, 3), H = gen.integer(0, 5);
        FirOperator<double> op(r, c, H);
        for (int k = 0; k <= H; ++k) op[k] = gen.matrix(r, c);
        double best = 0.0;
        for (int row = 0; row < r; ++row) {
            const auto y = op.apply(l1_witness(op, row));
            best = std::max(best, std::abs(y.back()(row)));
        }
        CHECK(best == doctest::Approx(l1_norm(op)).epsilon(1e-12));
    }
}

TEST_CASE("property: l1 norm is subadditive and bounds outputs") {
    oracle::Gen gen(12);
    for (int trial = 0; trial < 50; ++trial) {
        FirOperator<double> a(2, 2, 3), b(2, 2, 3);
        for (int k = 0; k <= 3; ++k) {
            a[k] = gen.matrix(2, 2);
            b[k] = gen.matrix(2, 2);
        }
        CHECK(l1_norm(a + b) <= l1_norm(a) + l1_norm(b) + 1e-12);
        std::vector<Vector> w;
        for (int t = 0; t < 8; ++t) w.push_back(gen.vector(2));
        for (const Vector& y : a.apply(w)) CHECK(inf_norm(y) <= l1_norm(a) + 1e-12);
    }
}

TEST_CASE("LQR and Kalman gains stabilize the hovercraft") {
    const SystemSpec spec = hovercraft_system();
    const LinearSystem<double> sys(spec.A, spec.B, spec.C);
    const Matrix K = dlqr(sys, spec.Q, spec.R);
    const Matrix L = kalman_predictor_gain(sys, spec.W, spec.V);
    CHECK(spectral_radius(Matrix(sys.A + sys.B * K)) < 1.0);
    CHECK(spectral_radius(Matrix(sys.A - L * sys.C)) < 1.0);
    // Riccati residual
    const Matrix P = solve_dare<double>(sys.A, sys.B, spec.Q, spec.R);
    const Matrix BtP = sys.B.transpose() * P;
    const Matrix res = spec.Q + sys.A.transpose() * P * sys.A -
                       sys.A.transpose() * P * sys.B * (spec.R + BtP * sys.B).inverse() * BtP * sys.A - P;
    CHECK(res.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("closed-loop responses match simulation") {
    const SystemSpec spec = hovercraft_system();
    const LinearSystem<double> sys(spec.A, spec.B, spec.C);
    StaticOutputController<double> ctrl(sys, dlqr(sys, spec.Q, spec.R), kalman_predictor_gain(sys, spec.W, spec.V));
    const int H = 30;
    const auto resp = closed_loop_responses(sys, ctrl, H);
    oracle::Gen gen(3);
    const Vector x0 = gen.vector(4);
    std::vector<Vector> uref, eta;
    for (int t = 0; t < H; ++t) {
        uref.push_back(gen.vector(2));
        eta.push_back(gen.vector(2, 0.1));
    }
    ctrl.reset();
    Vector x = x0;
    for (int t = 0; t < H; ++t) {
        const Vector u = ctrl.step(sys.C * x + eta[t], uref[t]);
        x = sys.A * x + sys.B * u;
        // prediction of x_{t+1}
        Vector pred = resp.x[t + 1] * x0;
        for (int k = 1; k <= t + 1; ++k) pred += resp.xu[k] * uref[t + 1 - k] + resp.xn[k] * eta[t + 1 - k];
        CHECK(inf_norm(Vector(pred - x)) < 1e-9);
    }
}

TEST_CASE("decay envelope dominates every tap") {
    const SystemSpec spec = hovercraft_system();
    const LinearSystem<double> sys(spec.A, spec.B, spec.C);
    StaticOutputController<double> ctrl(sys, dlqr(sys, spec.Q, spec.R), kalman_predictor_gain(sys, spec.W, spec.V));
    const auto resp = closed_loop_responses(sys, ctrl, 400);
    const DecayEnvelope env = fit_decay_envelope(closed_loop_responses(sys, ctrl, 200), sys);
    CHECK(env.rho < 1.0);
    for (int k = 0; k <= 400; ++k) {
        const double a = induced_inf_norm(Matrix(sys.C * resp.x.tap(k)));
        const double b = induced_inf_norm(Matrix(sys.C * resp.xn.tap(k)));
        CHECK(std::max(a, b) <= env.at(k) * (1 + 1e-9));
    }
}

TEST_CASE("unstable loop is rejected") {
    const LinearSystem<double> sys(Matrix::Constant(1, 1, 2.0), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    StaticOutputController<double> ctrl(sys, Matrix::Zero(1, 1), Matrix::Zero(1, 1));
    CHECK_FALSE(ctrl.stabilizing());
    CHECK_THROWS_AS(closed_loop_responses(sys, ctrl, 10), SynthesisError);
}

TEST_CASE("algebra instantiates in long double") {
    using LD = long double;
    MatrixX<LD> A(1, 1), B(1, 1), C(1, 1);
    A << 0.9L;
    B << 1.0L;
    C << 1.0L;
    const LinearSystem<LD> sys(A, B, C);
    const MatrixX<LD> K = dlqr<LD>(sys, MatrixX<LD>::Identity(1, 1), MatrixX<LD>::Identity(1, 1));
    CHECK(std::abs(static_cast<double>(0.9L + K(0, 0))) < 0.9);
}
