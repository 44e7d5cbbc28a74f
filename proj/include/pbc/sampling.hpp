#pragma once

// Uniform sampling of the measurement subspace with resets, and the circular
// training protocol used for closed-loop experiments.

#include "pbc/lin_sys.hpp"
#include "pbc/perception.hpp"
#include "pbc/rng.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace pbc {

struct SamplingPlan {
    double rbar = 1.0;      // targets are uniform on ||y||_inf <= rbar
    int T = 1;              // number of episodes
    int n = 0;              // episode length; 0 means the state dimension
    double sigma_0 = 0.0;   // resets are uniform on ||x_0||_inf <= sigma_0
    NoiseSpec noise;        // label noise
    std::uint64_t seed = 0;
    double guard = 1e6;     // state norm that counts as divergence

    void validate() const;
};

/// Minimum-norm inputs u_0..u_{n-1} with sum_{k=1}^{n} C Phi_xu(k) u_{n-k} = y_ref.
std::vector<Vector> design_reference_inputs(const LinearSystem<double>& sys, const FirOperator<double>& phi_xu,
                                            const Vector& y_ref, int n = 0);

struct EpisodeResult {
    Vector z;        // observation of the final state
    Vector y_train;  // noisy label C x_n + eta_n
    Vector x;        // final state (ground truth)
};

/// Drives the observer-based loop for u_ref.size() steps from x0 and returns the
/// final observation/label pair.
EpisodeResult run_episode(const LinearSystem<double>& sys, const ObservationMap& map,
                          StaticOutputController<double> ctrl, const std::vector<Vector>& u_ref, const Vector& x0,
                          const NoiseSpec& noise, Rng& rng, double guard = 1e6);

Dataset collect_dataset(const LinearSystem<double>& sys, const ObservationMap& map,
                        const StaticOutputController<double>& ctrl, const SamplingPlan& plan);

/// One long trajectory of the tracking loop u = K(xhat - x_ref) following
/// x_ref(k); every step contributes (g(C x_k), C x_k + eta_k).
Dataset collect_trajectory_dataset(const LinearSystem<double>& sys, const ObservationMap& map,
                                   StaticOutputController<double> ctrl, const std::function<Vector(int)>& x_ref,
                                   int T, const NoiseSpec& noise, std::uint64_t seed);

/// Points of a uniform grid with `per_side` points per axis on [-radius, radius]^p.
std::vector<Vector> box_grid(int p, double radius, int per_side);

/// Smallest coverage s_T(g(y)) over the grid points y.
double min_grid_coverage(const NwRegressor& reg, const ObservationMap& map, const std::vector<Vector>& grid);

}  // namespace pbc
