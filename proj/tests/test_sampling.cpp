#include "oracles.hpp"
#include "pbc/sampling.hpp"
#include "pbc/scenario.hpp"

#include <doctest.h>

using namespace pbc;

namespace {

LinearSystem<double> hovercraft() {
    const SystemSpec s = hovercraft_system();
    return {s.A, s.B, s.C};
}

StaticOutputController<double> lqg(const LinearSystem<double>& sys) {
    const SystemSpec s = hovercraft_system();
    return {sys, dlqr(sys, s.Q, s.R), kalman_predictor_gain(sys, s.W, s.V)};
}

}  // namespace

TEST_CASE("reference inputs: scalar one-step design") {
    const LinearSystem<double> sys(Matrix::Constant(1, 1, 0.3), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const StaticOutputController<double> ctrl(sys, Matrix::Zero(1, 1), Matrix::Zero(1, 1));
    const auto resp = closed_loop_responses(sys, ctrl, 1);
    const auto u = design_reference_inputs(sys, resp.xu, Vector::Constant(1, 0.7), 1);
    REQUIRE(u.size() == 1);
    CHECK(u[0](0) == doctest::Approx(0.7));
}

TEST_CASE("reference inputs: zero target gives zero inputs") {
    const auto sys = hovercraft();
    const auto resp = closed_loop_responses(sys, lqg(sys), 4);
    for (const Vector& u : design_reference_inputs(sys, resp.xu, Vector::Zero(2))) CHECK(u.norm() == 0.0);
}

TEST_CASE("reference inputs: nilpotent chain forward simulation") {
    Matrix A(2, 2), B(2, 1), C(1, 2);
    A << 0, 1, 0, 0;
    B << 0, 1;
    C << 1, 0;
    const LinearSystem<double> sys(A, B, C);
    const StaticOutputController<double> ctrl(sys, Matrix::Zero(1, 2), Matrix::Zero(2, 1));
    const auto resp = closed_loop_responses(sys, ctrl, 2);
    const auto u = design_reference_inputs(sys, resp.xu, Vector::Constant(1, 1.0), 2);
    CHECK(u[0](0) == doctest::Approx(1.0));
    CHECK(u[1](0) == doctest::Approx(0.0).epsilon(1e-12));
    Vector x = Vector::Zero(2);
    for (const Vector& ui : u) x = A * x + B * ui;
    CHECK((C * x)(0) == doctest::Approx(1.0));
}

TEST_CASE("rank-deficient input design is reported") {
    const LinearSystem<double> sys(0.5 * Matrix::Identity(2, 2), Matrix::Zero(2, 1), Matrix::Identity(2, 2));
    const StaticOutputController<double> ctrl(sys, Matrix::Zero(1, 2), Matrix::Zero(2, 2));
    const auto resp = closed_loop_responses(sys, ctrl, 2);
    CHECK_THROWS_AS(design_reference_inputs(sys, resp.xu, Vector::Ones(2), 2), SynthesisError);
}

TEST_CASE("noiseless episodes land exactly on the target") {
    const auto sys = hovercraft();
    const auto ctrl = lqg(sys);
    const auto map = make_observation_map("sinusoidal", 2, 3.0, 1);
    const auto resp = closed_loop_responses(sys, ctrl, 4);
    oracle::Gen gen(4);
    Rng rng = make_rng(1, 1);
    for (int i = 0; i < 20; ++i) {
        const Vector target = gen.vector(2, 2.0);
        const auto u = design_reference_inputs(sys, resp.xu, target);
        const EpisodeResult ep = run_episode(sys, *map, ctrl, u, Vector::Zero(4), NoiseSpec{0.0, 1.0}, rng);
        CHECK(inf_norm(Vector(sys.C * ep.x - target)) < 1e-8);
        CHECK(inf_norm(Vector(ep.z - map->forward(target))) < 1e-8);
    }
}

TEST_CASE("zero target, zero reset, zero noise ends at the origin") {
    const auto sys = hovercraft();
    const auto map = make_observation_map("sinusoidal", 2, 3.0, 1);
    Rng rng = make_rng(1, 2);
    const std::vector<Vector> u(4, Vector::Zero(2));
    const EpisodeResult ep = run_episode(sys, *map, lqg(sys), u, Vector::Zero(4), NoiseSpec{0.0, 1.0}, rng);
    CHECK(ep.x.norm() == 0.0);
    CHECK(ep.z == map->forward(Vector::Zero(2)));
}

TEST_CASE("noisy episodes stay within the decay envelope") {
    const auto sys = hovercraft();
    const auto ctrl = lqg(sys);
    const auto env = fit_decay_envelope(closed_loop_responses(sys, ctrl, 200), sys);
    const auto map = make_observation_map("sinusoidal", 2, 3.0, 1);
    SamplingPlan plan;
    plan.rbar = 1.0;
    plan.T = 1000;
    plan.sigma_0 = 0.05;
    plan.noise = NoiseSpec{0.02, 0.05};
    plan.seed = 17;
    const Dataset d = collect_dataset(sys, *map, ctrl, plan);
    const double spread = env.M * std::max(plan.sigma_0, plan.noise.bound()) / (1.0 - env.rho);
    // The targets are recovered from the same per-episode streams.
    for (int ell = 0; ell < plan.T; ++ell) {
        Rng rng = make_rng(plan.seed, ell);
        uniform_box(rng, 4, plan.sigma_0);
        const Vector target = uniform_box(rng, 2, plan.rbar);
        CHECK(inf_norm(Vector(d.y_true[ell] - target)) <= spread);
    }
}

TEST_CASE("T=1 noiseless collection returns the sampled target") {
    const auto sys = hovercraft();
    const auto map = make_observation_map("sinusoidal", 2, 3.0, 1);
    SamplingPlan plan;
    plan.T = 1;
    plan.noise = NoiseSpec{0.0, 1.0};
    plan.seed = 3;
    const Dataset d = collect_dataset(sys, *map, lqg(sys), plan);
    Rng rng = make_rng(3, 0);
    uniform_box(rng, 4, 0.0);
    const Vector target = uniform_box(rng, 2, plan.rbar);
    CHECK(inf_norm(Vector(d.y[0] - target)) < 1e-8);
}

TEST_CASE("collection is a pure function of seed and episode index") {
    const auto sys = hovercraft();
    const auto map = make_observation_map("sinusoidal", 2, 3.0, 1);
    SamplingPlan plan;
    plan.T = 50;
    plan.noise = NoiseSpec{0.01, 1.0};
    plan.sigma_0 = 0.1;
    plan.seed = 99;
    const Dataset a = collect_dataset(sys, *map, lqg(sys), plan);
    plan.T = 80;
    const Dataset b = collect_dataset(sys, *map, lqg(sys), plan);
    for (int t = 0; t < 50; ++t) {
        CHECK(a.z[t] == b.z[t]);
        CHECK(a.y[t] == b.y[t]);
    }
}

TEST_CASE("marginal of sampled positions is flat") {
    const auto sys = hovercraft();
    const auto map = make_observation_map("sinusoidal", 2, 3.0, 1);
    SamplingPlan plan;
    plan.T = 10000;
    plan.rbar = 1.0;
    plan.noise = NoiseSpec{0.0, 1.0};
    plan.seed = 5;
    const Dataset d = collect_dataset(sys, *map, lqg(sys), plan);
    const int bins = 10;
    std::vector<int> counts(bins, 0);
    for (const Vector& y : d.y_true) counts[std::min(bins - 1, static_cast<int>((y(0) + 1.0) / 0.2))]++;
    const double expect = plan.T / static_cast<double>(bins);
    const double sd = std::sqrt(expect * (1 - 1.0 / bins));
    for (int c : counts) CHECK(std::abs(c - expect) <= 3.5 * sd);
}

TEST_CASE("box grid layout") {
    const auto g = box_grid(2, 1.0, 3);
    REQUIRE(g.size() == 9);
    CHECK(g[0](0) == -1.0);
    CHECK(g[4].norm() == 0.0);
    CHECK(g[8](1) == 1.0);
    CHECK(box_grid(1, 2.0, 1)[0](0) == 0.0);
}
