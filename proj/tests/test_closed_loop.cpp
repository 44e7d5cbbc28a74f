#include "oracles.hpp"
#include "pbc/closed_loop.hpp"

#include <doctest.h>

#include <algorithm>

using namespace pbc;

namespace {

Trajectory hand_trajectory(const std::vector<double>& x, const std::vector<double>& ref, const std::vector<double>& u) {
    Trajectory t;
    for (double v : x) t.x.push_back(Vector::Constant(1, v));
    for (double v : ref) t.x_ref.push_back(Vector::Constant(1, v));
    for (double v : u) t.u.push_back(Vector::Constant(1, v));
    return t;
}

// h(z) plus a bounded, deterministic, sign-switching offset.
class OffsetPredictor final : public Predictor {
public:
    explicit OffsetPredictor(double eps) : eps_(eps) {}
    Vector predict(const Vector& z) const override {
        Vector y = z;
        for (int i = 0; i < y.size(); ++i) y(i) += std::sin(997.0 * z(i) + i) >= 0 ? eps_ : -eps_;
        return y;
    }

private:
    double eps_;
};

// An integrator holds any constant reference at zero input, which the held-tail
// tracking formulation requires.
LinearSystem<double> integrator() {
    return LinearSystem<double>(Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
}

SynthesizedController scalar_tracking_controller() {
    const LinearSystem<double> sys = integrator();
    const AugmentedSystem pl = build_tracking_augmentation(sys, Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.01, 0.05, 0.0);
    return sls_synthesize(pl, 15, 0.1);
}

}  // namespace

TEST_CASE("tracking cost of a single step") {
    const Trajectory t = hand_trajectory({0.3, 0.0}, {0.0}, {0.1});
    CHECK(tracking_cost(t, Matrix::Ones(1, 1), Matrix::Ones(1, 1)) == doctest::Approx(0.3));
    CHECK(tracking_cost(t, Matrix::Constant(1, 1, 4.0), Matrix::Ones(1, 1)) == doctest::Approx(0.6));
    CHECK(tracking_cost(t, Matrix::Zero(1, 1), Matrix::Ones(1, 1)) == doctest::Approx(0.1));
}

TEST_CASE("tracking cost uses the error to the reference") {
    const Trajectory t = hand_trajectory({1.0, 2.0, 0.0}, {1.0, 1.5}, {0.0, 0.0});
    CHECK(tracking_cost(t, Matrix::Ones(1, 1), Matrix::Ones(1, 1)) == doctest::Approx(0.5));
}

TEST_CASE("property: tracking cost ignores the order of steps") {
    oracle::Gen gen(31);
    for (int trial = 0; trial < 50; ++trial) {
        const int T = gen.integer(1, 12);
        std::vector<double> x, r, u;
        for (int k = 0; k < T; ++k) {
            x.push_back(gen.uniform(-2, 2));
            r.push_back(gen.uniform(-1, 1));
            u.push_back(gen.uniform(-3, 3));
        }
        std::vector<int> perm(T);
        for (int k = 0; k < T; ++k) perm[k] = k;
        std::shuffle(perm.begin(), perm.end(), gen.rng);
        std::vector<double> xp, rp, up;
        for (int k : perm) {
            xp.push_back(x[k]);
            rp.push_back(r[k]);
            up.push_back(u[k]);
        }
        x.push_back(0.0);
        xp.push_back(0.0);
        const Matrix Q = Matrix::Constant(1, 1, gen.uniform(0, 2)), R = Matrix::Constant(1, 1, gen.uniform(0, 2));
        CHECK(tracking_cost(hand_trajectory(x, r, u), Q, R) == tracking_cost(hand_trajectory(xp, rp, up), Q, R));
    }
}

TEST_CASE("reference signal class checks") {
    const ReferenceSignal steep([](int k) { return Vector::Constant(1, 0.5 * k); }, 10.0, 0.1);
    CHECK_NOTHROW(steep.at(0));
    CHECK_THROWS_AS(steep.at(1), InputError);
    const ReferenceSignal large([](int) { return Vector::Constant(1, 0.5); }, 0.2, 1.0);
    CHECK_THROWS_AS(large.at(0), InputError);
    CHECK_THROWS_AS(steep.at(-1), InputError);
}

TEST_CASE("property: random walks stay in their class") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ReferenceSignal ref = ReferenceSignal::random_walk(3, 0.4, 0.07, seed, 300);
        for (int k = 0; k < 320; ++k) CHECK_NOTHROW(ref.at(k));
    }
}

TEST_CASE("circle reference has the stated amplitude") {
    const ReferenceSignal c = ReferenceSignal::circle(Matrix::Identity(2, 2), 1.9, 2.0, 100, 0.13);
    CHECK(c.r_max_ref() == doctest::Approx(2.0));
    CHECK(c.at(0)(1) == doctest::Approx(2.0));
    CHECK(c.at(25)(0) == doctest::Approx(1.9));
}

TEST_CASE("instability scenario: flawed perception drives x away geometrically") {
    const Example1Config cfg;
    const Trajectory t = run_example1(cfg, 30, false);
    REQUIRE(t.x.size() >= 4);
    CHECK(t.x[1](0) == doctest::Approx(cfg.xbar));
    for (int k = 2; k < static_cast<int>(t.x.size()); ++k)
        CHECK(t.x[k](0) == doctest::Approx(std::pow(cfg.a, k - 2) * cfg.r).epsilon(1e-12));
    CHECK(t.escaped);
    CHECK(t.escape_time == 3);
    for (int k = 2; k < t.steps(); ++k) CHECK(t.yhat[k](0) == 0.0);
}

TEST_CASE("instability scenario: exact perception stays inside") {
    const Example1Config cfg;
    const Trajectory t = run_example1(cfg, 200, true);
    CHECK_FALSE(t.escaped);
    for (const Vector& x : t.x) CHECK(std::abs(x(0)) <= cfg.r);
    CHECK(std::abs(t.x.back()(0)) < 1e-9);
}

TEST_CASE("perfect perception, no noise, zero reference keeps the origin") {
    const SynthesizedController c = scalar_tracking_controller();
    const LinearSystem<double> sys = integrator();
    const IdentityMap map;
    SlsTrackingController k(realize_controller(c));
    RolloutOptions opt;
    opt.T_sim = 50;
    const Trajectory t = rollout(sys, map, nullptr, k, ReferenceSignal::constant(Vector::Zero(1)), opt);
    for (const Vector& x : t.x) CHECK(x(0) == 0.0);
    for (const Vector& u : t.u) CHECK(u(0) == 0.0);
}

TEST_CASE("exact predictor and the null predictor give identical rollouts") {
    const SynthesizedController c = scalar_tracking_controller();
    const LinearSystem<double> sys = integrator();
    auto map = std::make_shared<IdentityMap>();
    const TruePredictor truth(map);
    const ReferenceSignal ref = ReferenceSignal::random_walk(1, 0.3, 0.05, 5, 100);
    RolloutOptions opt;
    opt.T_sim = 100;
    opt.process_noise = NoiseSpec{0.01, 0.01};
    opt.seed = 12;
    SlsTrackingController k1(realize_controller(c)), k2(realize_controller(c));
    const Trajectory a = rollout(sys, *map, &truth, k1, ref, opt);
    const Trajectory b = rollout(sys, *map, nullptr, k2, ref, opt);
    REQUIRE(a.x.size() == b.x.size());
    for (std::size_t k = 0; k < a.x.size(); ++k) CHECK(a.x[k] == b.x[k]);
    for (std::size_t k = 0; k < a.u.size(); ++k) CHECK(a.u[k] == b.u[k]);
    CHECK(a.max_perception_error == 0.0);
}

TEST_CASE("certainty-equivalent step is linear from rest") {
    const SynthesizedController c = scalar_tracking_controller();
    oracle::Gen gen(40);
    for (int trial = 0; trial < 10; ++trial) {
        SlsTrackingController k1(realize_controller(c)), k2(realize_controller(c)), k3(realize_controller(c));
        const double alpha = gen.uniform(-2, 2), beta = gen.uniform(-2, 2);
        for (int t = 0; t < 25; ++t) {
            const Vector y1 = gen.vector(1), y2 = gen.vector(1), r1 = gen.vector(1), r2 = gen.vector(1);
            const Vector u1 = ce_step(k1, y1, r1), u2 = ce_step(k2, y2, r2);
            const Vector u3 = ce_step(k3, Vector(alpha * y1 + beta * y2), Vector(alpha * r1 + beta * r2));
            CHECK(inf_norm(Vector(u3 - alpha * u1 - beta * u2)) < 1e-9);
        }
    }
}

TEST_CASE("suboptimality bound: zero error, linearity and the certificate limit") {
    const SynthesizedController c = scalar_tracking_controller();
    const double r_max_ref = 0.3;
    const double r = r_max_of_responses(c, r_max_ref) + 0.5;
    const double margin = perception_error_margin(c, r, r_max_ref);
    CHECK(suboptimality_bound(0.0, c, r, r_max_ref) == 0.0);
    const double e = 0.25 * margin;
    CHECK(suboptimality_bound(2 * e, c, r, r_max_ref) == doctest::Approx(2 * suboptimality_bound(e, c, r, r_max_ref)));
    CHECK(suboptimality_bound(e, c, r, r_max_ref) == doctest::Approx(e * noise_cost_l1(c.plant, c.phi)));
    CHECK_THROWS_AS(suboptimality_bound(1.01 * margin, c, r, r_max_ref), CertificateUnavailable);
    CHECK_THROWS_AS(perception_error_margin(c, r_max_of_responses(c, r_max_ref), r_max_ref), CertificateUnavailable);
}

TEST_CASE("property: bounded perception error inside the margin neither escapes nor exceeds the cost bound") {
    const SynthesizedController c = scalar_tracking_controller();
    const LinearSystem<double> sys = integrator();
    const IdentityMap map;
    const double r_max_ref = 0.3;
    const double r = r_max_of_responses(c, r_max_ref) + 0.5;
    const double eps = 0.9 * perception_error_margin(c, r, r_max_ref);
    const OffsetPredictor noisy(eps);
    const Matrix Q = Matrix::Ones(1, 1), R = Matrix::Ones(1, 1);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ReferenceSignal ref = ReferenceSignal::random_walk(1, r_max_ref, 0.05, seed, 300);
        RolloutOptions opt;
        opt.T_sim = 300;
        opt.region = r;
        opt.process_noise = NoiseSpec{0.01, 0.01};
        opt.seed = seed;
        SlsTrackingController k1(realize_controller(c)), k2(realize_controller(c));
        const Trajectory ce = rollout(sys, map, &noisy, k1, ref, opt);
        const Trajectory star = rollout(sys, map, nullptr, k2, ref, opt);
        CHECK_FALSE(ce.escaped);
        CHECK(ce.max_perception_error <= eps * (1 + 1e-12));
        CHECK(tracking_cost(ce, Q, R) - tracking_cost(star, Q, R) <=
              suboptimality_bound(ce.max_perception_error, c, r, r_max_ref) + 1e-12);
    }
}
