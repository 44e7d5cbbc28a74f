#include "pbc/sampling.hpp"

#include <cmath>

namespace pbc {

void SamplingPlan::validate() const {
    require(rbar > 0, "SamplingPlan: rbar must be positive");
    require(T >= 1, "SamplingPlan: T must be at least 1");
    require(n >= 0, "SamplingPlan: negative episode length");
    require(sigma_0 >= 0, "SamplingPlan: sigma_0 must be nonnegative");
    require(noise.std >= 0 && noise.clip > 0, "SamplingPlan: invalid noise spec");
}

std::vector<Vector> design_reference_inputs(const LinearSystem<double>& sys, const FirOperator<double>& phi_xu,
                                            const Vector& y_ref, int n) {
    if (n <= 0) n = sys.n();
    require(y_ref.size() == sys.p(), "design_reference_inputs: y_ref has wrong dimension");
    require(phi_xu.rows() == sys.n() && phi_xu.cols() == sys.m(), "design_reference_inputs: Phi_xu has wrong shape");
    require(phi_xu.horizon() >= n, "design_reference_inputs: Phi_xu horizon shorter than the episode");
    const int m = sys.m();
    // Block k multiplies u_{n-k}.
    Matrix S(sys.p(), n * m);
    for (int k = 1; k <= n; ++k) S.middleCols((k - 1) * m, m) = sys.C * phi_xu[k];
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(S);
    cod.setThreshold(1e-10);
    if (cod.rank() < sys.p())
        throw SynthesisError("design_reference_inputs: [C Phi_xu(1) ... C Phi_xu(n)] has rank " +
                             std::to_string(cod.rank()) + " < p = " + std::to_string(sys.p()));
    const Vector v = cod.solve(y_ref);
    std::vector<Vector> u(n);
    for (int k = 1; k <= n; ++k) u[n - k] = v.segment((k - 1) * m, m);
    return u;
}

EpisodeResult run_episode(const LinearSystem<double>& sys, const ObservationMap& map,
                          StaticOutputController<double> ctrl, const std::vector<Vector>& u_ref, const Vector& x0,
                          const NoiseSpec& noise, Rng& rng, double guard) {
    require(x0.size() == sys.n(), "run_episode: x0 has wrong dimension");
    ctrl.reset();
    Vector x = x0;
    const Vector w = Vector::Zero(sys.n());
    for (const Vector& ur : u_ref) {
        const Vector y = sys.C * x + clipped_gaussian(rng, sys.p(), noise);
        const Vector u = ctrl.step(y, ur);
        x = simulate_step(sys, x, u, w);
        if (!x.allFinite() || inf_norm(x) > guard)
            throw DivergenceError("run_episode: state norm exceeded the guard");
    }
    EpisodeResult out;
    const Vector cx = sys.C * x;
    out.z = map.forward(cx);
    out.y_train = cx + clipped_gaussian(rng, sys.p(), noise);
    out.x = x;
    return out;
}

Dataset collect_dataset(const LinearSystem<double>& sys, const ObservationMap& map,
                        const StaticOutputController<double>& ctrl, const SamplingPlan& plan) {
    plan.validate();
    require(map.p() == sys.p(), "collect_dataset: map dimension differs from the measurement dimension");
    const int n = plan.n > 0 ? plan.n : sys.n();
    const auto responses = closed_loop_responses(sys, ctrl, n);
    Dataset data;
    data.sigma_eta = plan.noise.bound();
    data.sigma_0 = plan.sigma_0;
    data.map_id = map.id();
    data.seed = plan.seed;
    data.z.reserve(plan.T);
    data.y.reserve(plan.T);
    data.y_true.reserve(plan.T);
    for (int ell = 0; ell < plan.T; ++ell) {
        Rng rng = make_rng(plan.seed, static_cast<std::uint64_t>(ell));
        const Vector x0 = uniform_box(rng, sys.n(), plan.sigma_0);
        const Vector y_ref = uniform_box(rng, sys.p(), plan.rbar);
        const auto u = design_reference_inputs(sys, responses.xu, y_ref, n);
        const EpisodeResult ep = run_episode(sys, map, ctrl, u, x0, plan.noise, rng, plan.guard);
        data.z.push_back(ep.z);
        data.y.push_back(ep.y_train);
        data.y_true.push_back(sys.C * ep.x);
    }
    return data;
}

Dataset collect_trajectory_dataset(const LinearSystem<double>& sys, const ObservationMap& map,
                                   StaticOutputController<double> ctrl, const std::function<Vector(int)>& x_ref,
                                   int T, const NoiseSpec& noise, std::uint64_t seed) {
    require(T >= 1, "collect_trajectory_dataset: T must be at least 1");
    ctrl.reset();
    Rng rng = make_rng(seed, 0x7ea1);
    Dataset data;
    data.sigma_eta = noise.bound();
    data.map_id = map.id();
    data.seed = seed;
    Vector x = Vector::Zero(sys.n());
    const Vector w = Vector::Zero(sys.n());
    for (int k = 0; k < T; ++k) {
        const Vector cx = sys.C * x;
        const Vector y = cx + clipped_gaussian(rng, sys.p(), noise);
        data.z.push_back(map.forward(cx));
        data.y.push_back(y);
        data.y_true.push_back(cx);
        const Vector u = ctrl.step(y, -ctrl.K() * x_ref(k));
        x = simulate_step(sys, x, u, w);
    }
    return data;
}

std::vector<Vector> box_grid(int p, double radius, int per_side) {
    require(p >= 1 && per_side >= 1, "box_grid: invalid size");
    long total = 1;
    for (int i = 0; i < p; ++i) total *= per_side;
    std::vector<Vector> grid;
    grid.reserve(total);
    for (long idx = 0; idx < total; ++idx) {
        Vector y(p);
        long rest = idx;
        for (int d = 0; d < p; ++d) {
            const long c = rest % per_side;
            rest /= per_side;
            y(d) = per_side == 1 ? 0.0 : -radius + 2.0 * radius * static_cast<double>(c) / (per_side - 1);
        }
        grid.push_back(y);
    }
    return grid;
}

double min_grid_coverage(const NwRegressor& reg, const ObservationMap& map, const std::vector<Vector>& grid) {
    double best = kInf;
    for (const auto& y : grid) best = std::min(best, reg.coverage(map.forward(y)));
    return best;
}

}  // namespace pbc
