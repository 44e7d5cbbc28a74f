#include "oracles.hpp"
#include "pbc/scenario.hpp"
#include "pbc/synthesis.hpp"

#include <doctest.h>

using namespace pbc;

namespace {

LinearSystem<double> scalar(double a) {
    return {Matrix::Constant(1, 1, a), Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
}

LinearSystem<double> hovercraft() {
    const SystemSpec s = hovercraft_system();
    return {s.A, s.B, s.C};
}

}  // namespace

TEST_CASE("tracking augmentation blocks") {
    const LinearSystem<double> sys = scalar(2.0);
    const AugmentedSystem a = build_tracking_augmentation(sys, Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.1, 0.2, 0.3);
    Matrix expected(2, 2);
    expected << 2, 1, 0, 1;
    CHECK(a.A == expected);
    CHECK(a.B == (Matrix(2, 1) << 1, 0).finished());
    CHECK(a.C == (Matrix(2, 2) << 1, 1, 0, 1).finished());
    CHECK(a.H == (Matrix(2, 2) << 0.1, -0.2, 0, 0.2).finished());
    CHECK(a.N == (Matrix(2, 1) << 1, 0).finished());
}

TEST_CASE("hovercraft augmentation keeps A and A - I") {
    const auto sys = hovercraft();
    const SystemSpec s = hovercraft_system();
    const AugmentedSystem a = build_tracking_augmentation(sys, s.Q, s.R, 0.01, 0.13, 0.01);
    CHECK(a.A.topLeftCorner(4, 4) == sys.A);
    CHECK(a.A.topRightCorner(4, 4) == Matrix(sys.A - Matrix::Identity(4, 4)));
    CHECK(a.A.bottomRightCorner(4, 4) == Matrix::Identity(4, 4));
    CHECK(a.A.bottomLeftCorner(4, 4).norm() == 0.0);
}

TEST_CASE("no disturbance and no reference motion gives a zero H") {
    const AugmentedSystem a =
        build_tracking_augmentation(scalar(0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.0, 0.0, 0.0);
    CHECK(a.H.norm() == 0.0);
}

TEST_CASE("augmentation input validation") {
    CHECK_THROWS_AS(build_tracking_augmentation(scalar(0.5), Matrix::Constant(1, 1, -1.0), Matrix::Ones(1, 1), 0, 0, 0),
                    InputError);
    CHECK_THROWS_AS(build_tracking_augmentation(scalar(0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0, -0.1, 0),
                    InputError);
}

TEST_CASE("dead-beat scalar responses satisfy the constraints") {
    const LinearSystem<double> sys(Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const AugmentedSystem pl = plain_plant(sys, Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    SystemResponses phi{FirOperator<double>(1, 1, 2), FirOperator<double>(1, 1, 2), FirOperator<double>(1, 1, 2),
                        FirOperator<double>(1, 1, 2), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    phi.xw[1](0, 0) = 1.0;
    CHECK(sls_residual(pl, phi) == 0.0);
    CHECK(oracle::recursion_residual(pl, phi) == 0.0);
}

TEST_CASE("perturbing the leading tap shows up exactly in the residual") {
    const LinearSystem<double> sys(Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const AugmentedSystem pl = plain_plant(sys, Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    SystemResponses phi{FirOperator<double>(1, 1, 2), FirOperator<double>(1, 1, 2), FirOperator<double>(1, 1, 2),
                        FirOperator<double>(1, 1, 2), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    phi.xw[1](0, 0) = 1.0 + 0.25;
    CHECK(sls_residual(pl, phi) == doctest::Approx(0.25));
}

TEST_CASE("observer-based loop responses satisfy the constraints") {
    const auto sys = hovercraft();
    const SystemSpec s = hovercraft_system();
    const StaticOutputController<double> ctrl(sys, dlqr(sys, s.Q, s.R), kalman_predictor_gain(sys, s.W, s.V));
    // Unroll the loop driven by w (state) and n (measurement) with a strictly proper controller.
    const int H = 200;
    const int n = 4, m = 2, p = 2;
    const Matrix K = ctrl.K(), L = ctrl.L();
    Matrix M = Matrix::Zero(2 * n, 2 * n);  // (x, xhat)
    M.topLeftCorner(n, n) = sys.A;
    M.topRightCorner(n, n) = sys.B * K;
    M.bottomLeftCorner(n, n) = L * sys.C;
    M.bottomRightCorner(n, n) = sys.A + sys.B * K - L * sys.C;
    Matrix inW = Matrix::Zero(2 * n, n), inN = Matrix::Zero(2 * n, p);
    inW.topRows(n).setIdentity();
    inN.bottomRows(n) = L;
    SystemResponses phi{FirOperator<double>(n, n, H), FirOperator<double>(n, p, H), FirOperator<double>(m, n, H),
                        FirOperator<double>(m, p, H), Matrix::Zero(n, n), Matrix::Zero(m, n)};
    Matrix PW = inW, PN = inN;
    for (int k = 1; k <= H; ++k) {
        phi.xw[k] = PW.topRows(n);
        phi.xn[k] = PN.topRows(n);
        phi.uw[k] = K * PW.bottomRows(n);
        phi.un[k] = K * PN.bottomRows(n);
        PW = M * PW;
        PN = M * PN;
    }
    const AugmentedSystem pl = plain_plant(sys, s.Q, s.R);
    CHECK(sls_residual(pl, phi) <= 1e-6);
    CHECK(oracle::recursion_residual(pl, phi) <= 1e-6);
}

TEST_CASE("vectorize round trip") {
    const AugmentedSystem pl = plain_plant(scalar(0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    oracle::Gen gen(1);
    const Vector theta = gen.vector(assemble_sls_constraints(pl, 3).E.cols());
    CHECK(vectorize(unvectorize(pl, 3, theta)) == theta);
}

TEST_CASE("no disturbance gives zero objective") {
    const AugmentedSystem pl =
        build_tracking_augmentation(scalar(0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.0, 0.0, 0.0);
    const SynthesizedController c = sls_synthesize(pl, 6, 0.0);
    CHECK(c.objective == doctest::Approx(0.0));
    CHECK(l1_norm(c.phi.xn) * 0.0 == 0.0);
    CHECK(c.residual <= 1e-7);
}

TEST_CASE("scalar synthesis is feasible and self-consistent") {
    const AugmentedSystem pl = plain_plant(scalar(1.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const SynthesizedController c = sls_synthesize(pl, 10, 0.2);
    CHECK(c.residual <= 1e-7);
    CHECK(oracle::recursion_residual(pl, c.phi) <= 1e-7);
    CHECK(c.duality_gap <= 1e-8);
    CHECK(cost_l1(pl, c.phi, 0.2) == doctest::Approx(c.objective).epsilon(1e-8));
}

TEST_CASE("tracking synthesis at a short horizon") {
    const auto sys = hovercraft();
    const SystemSpec s = hovercraft_system();
    const AugmentedSystem pl = build_tracking_augmentation(sys, s.Q, s.R, 0.01, 0.13, 0.01);
    const SynthesizedController c = sls_synthesize(pl, 12, 0.05);
    CHECK(c.residual <= 1e-7);
    CHECK(oracle::recursion_residual(pl, c.phi) <= 1e-7);
    CHECK(c.duality_gap <= 1e-8);
    CHECK(r_max_of_responses(c, 0.5) >= 0.5);

    SUBCASE("realization reproduces noise-channel taps") {
        RealizedController k = realize_controller(c);
        Vector xi = Vector::Zero(pl.nx());
        for (int t = 0; t <= 15; ++t) {
            Vector ybar = pl.C * xi;
            if (t == 0) ybar(0) += 1.0;
            const Vector u = k.step(ybar);
            if (t >= 1) CHECK(inf_norm(Vector(u - c.phi.un_at(t).col(0))) < 1e-8);
            xi = pl.A * xi + pl.B * u;
            CHECK(inf_norm(Vector(xi - c.phi.xn_at(t + 1).col(0))) < 1e-8);
        }
    }
    SUBCASE("zero input gives zero output") {
        RealizedController k = realize_controller(c);
        for (int t = 0; t < 20; ++t) CHECK(k.step(Vector::Zero(pl.ny())).norm() == 0.0);
    }
}

TEST_CASE("robust synthesis") {
    const auto sys = hovercraft();
    const SystemSpec s = hovercraft_system();
    const AugmentedSystem pl = build_tracking_augmentation(sys, s.Q, s.R, 0.01, 0.13, 0.01);
    const int H = 12;
    const SynthesizedController free = sls_synthesize(pl, H, 0.0);

    SUBCASE("inactive constraint reproduces the nominal objective") {
        CHECK(robust_sls_synthesize(pl, H, 0.0, 1e6, 0.5).objective == doctest::Approx(free.objective).epsilon(1e-7));
        const SynthesizedController nominal = sls_synthesize(pl, H, 0.02);
        CHECK(robust_sls_synthesize(pl, H, 0.02, 1e6, 0.5).objective ==
              doctest::Approx(nominal.objective).epsilon(1e-7));
    }
    SUBCASE("added constraint holds and the objective grows as r shrinks") {
        const double eps = 0.02;
        const SynthesizedController nominal = sls_synthesize(pl, H, eps);
        const double lhs0 = output_disturbance_l1(nominal.plant, nominal.phi) +
                            eps * output_noise_l1(nominal.plant, nominal.phi);
        double prev = -kInf;
        for (double slack : {2.0, 1.0, 0.9, 0.8, 0.7, 0.6}) {
            const double r = 0.5 + slack * lhs0;
            const SynthesizedController c = robust_sls_synthesize(pl, H, eps, r, 0.5);
            const double lhs = output_disturbance_l1(c.plant, c.phi) + eps * output_noise_l1(c.plant, c.phi);
            CHECK(lhs <= r - 0.5 + 1e-7);
            CHECK(c.residual <= 1e-7);
            CHECK(c.objective >= prev - 1e-8);
            if (slack >= 1.0) CHECK(c.objective == doctest::Approx(nominal.objective).epsilon(1e-7));
            if (slack < 1.0) CHECK(c.objective > nominal.objective + 1e-6);
            prev = c.objective;
        }
    }
    SUBCASE("r at or below r_max_ref is rejected") {
        CHECK_THROWS_AS(robust_sls_synthesize(pl, H, 0.01, 0.5, 0.5), InputError);
    }
    SUBCASE("unsatisfiable radius is reported") {
        CHECK_THROWS_AS(robust_sls_synthesize(pl, H, 0.01, 0.5 + 1e-6, 0.5), SynthesisError);
        CHECK_THROWS_AS(robust_sls_synthesize(pl, H, 0.02, 0.9, 0.5), SynthesisError);
    }
}

TEST_CASE("too short a horizon is reported") {
    const auto sys = hovercraft();
    const SystemSpec s = hovercraft_system();
    const AugmentedSystem pl = plain_plant(sys, s.Q, s.R);
    CHECK_THROWS_AS(sls_synthesize(pl, 1, 0.1), SynthesisError);
}
