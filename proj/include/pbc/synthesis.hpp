#pragma once

// System level synthesis of L1-optimal output-feedback controllers over
// finite impulse responses, with the reference-tracking augmentation.

#include "pbc/lin_sys.hpp"
#include "pbc/lp.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace pbc {

/// Output-feedback plant in disturbance-rejection form
///   xi+ = A xi + B u + H omega,  ybar = C xi + N eta,
/// together with the weights of the L1 objective and the output used for r_max.
///
/// For the tracking problem xi = [x - r; r], omega = [w / sigma_w; (r+ - r) / delta].
/// The reference block of A is a pure integrator that no controller can move, so
/// responses to omega cannot be FIR; with `hold_tail` the last tap is held forever
/// (Phi(k) = tail for k > H) and the parts of the tail that reach the cost are
/// constrained to zero.
struct AugmentedSystem {
    Matrix A, B, C, H, N;
    Matrix Q_half;  // rows x state, zero rows removed
    Matrix R_half;  // rows x input, zero rows removed
    Matrix C_out;   // C [I 0]
    bool hold_tail = false;
    double sigma_w = 0.0;
    double delta = 0.0;
    double sigma_eta = 0.0;

    int nx() const { return static_cast<int>(A.rows()); }
    int nu() const { return static_cast<int>(B.cols()); }
    int ny() const { return static_cast<int>(C.rows()); }
    int nw() const { return static_cast<int>(H.cols()); }
    int nn() const { return static_cast<int>(N.cols()); }
};

/// Tracking augmentation; Q and R must be diagonal and positive semidefinite.
AugmentedSystem build_tracking_augmentation(const LinearSystem<double>& sys, const Matrix& Q, const Matrix& R,
                                            double sigma_w, double delta, double sigma_eta);

/// The plain plant itself (H = I, N = I, no tail): disturbance rejection.
AugmentedSystem plain_plant(const LinearSystem<double>& sys, const Matrix& Q, const Matrix& R);

/// Responses Phi(1..H) (tap 0 is zero) plus the held tail for k > H.
struct SystemResponses {
    FirOperator<double> xw, xn, uw, un;
    Matrix tail_x;  // Phi_xw(k) for k > H
    Matrix tail_u;  // Phi_uw(k) for k > H

    int horizon() const { return xw.horizon(); }
    Matrix xw_at(int k) const { return k > horizon() ? tail_x : xw.tap(k); }
    Matrix uw_at(int k) const { return k > horizon() ? tail_u : uw.tap(k); }
    Matrix xn_at(int k) const { return xn.tap(k); }
    Matrix un_at(int k) const { return un.tap(k); }
};

/// Tap-wise achievability equations E theta = f. theta stacks the column-major
/// vectorizations of Phi_xw(1..H), Phi_xn(1..H), Phi_uw(1..H), Phi_un(1..H), tail_x, tail_u.
struct SlsConstraintSystem {
    Eigen::SparseMatrix<double> E;
    Vector f;
    int horizon = 0;
};

SlsConstraintSystem assemble_sls_constraints(const AugmentedSystem& plant, int horizon);
SlsConstraintSystem assemble_sls_constraints(const LinearSystem<double>& sys, int horizon);

Vector vectorize(const SystemResponses& phi);
SystemResponses unvectorize(const AugmentedSystem& plant, int horizon, const Vector& theta);

/// max |E theta - f| for the given responses.
double sls_residual(const AugmentedSystem& plant, const SystemResponses& phi);

struct SynthesizedController {
    AugmentedSystem plant;
    SystemResponses phi;
    double objective = 0.0;       // LP optimum
    double l1_objective = 0.0;    // objective recomputed from the responses
    double residual = 0.0;        // sls_residual of phi
    double duality_gap = 0.0;
    double noise_scale = 0.0;     // epsilon used on the noise channel
    int lp_rows = 0;
    int lp_cols = 0;
    int lp_iterations = 0;
};

/// min || [Q 0; 0 R] Phi [H 0; 0 eps N] ||_L1 over FIR responses (held tail for tracking).
SynthesizedController sls_synthesize(const AugmentedSystem& plant, int horizon, double noise_scale,
                                     const LpOptions& options = {});

/// Adds || C_out Phi_xw H ||_L1 + eps_h || C_out Phi_xn N ||_L1 <= r - r_max_ref.
SynthesizedController robust_sls_synthesize(const AugmentedSystem& plant, int horizon, double eps_h, double r,
                                            double r_max_ref, const LpOptions& options = {});

/// Individual L1 terms evaluated on a response set.
double cost_l1(const AugmentedSystem& plant, const SystemResponses& phi, double noise_scale);
double output_disturbance_l1(const AugmentedSystem& plant, const SystemResponses& phi);  // ||C_out Phi_xw H||
double output_noise_l1(const AugmentedSystem& plant, const SystemResponses& phi);        // ||C_out Phi_xn N||
double noise_cost_l1(const AugmentedSystem& plant, const SystemResponses& phi);          // ||[Q Phi_xn N; R Phi_un N]||

/// r_max_ref + || C [I 0] Phi_xi_omega H ||_L1.
double r_max_of_responses(const SynthesizedController& ctrl, double r_max_ref);

/// Online implementation of K = Phi_un - Phi_uw Phi_xw^{-1} Phi_xn:
///   v_s = sum_{j>=1} Phi_xn(j+1) ybar_{s-j} - sum_{j>=1} Phi_xw(j+1) v_{s-j}
///   u_t = sum_{k>=1} Phi_un(k) ybar_{t-k} - sum_{k>=1} Phi_uw(k) v_{t-k}
/// The held tails are applied through running sums of v.
class RealizedController {
public:
    explicit RealizedController(SystemResponses phi);

    /// Returns u_t; ybar_t only influences later inputs.
    Vector step(const Vector& ybar);
    void reset();

    int input_dim() const { return static_cast<int>(phi_.un.rows()); }
    int measurement_dim() const { return static_cast<int>(phi_.un.cols()); }
    const SystemResponses& responses() const { return phi_; }

private:
    SystemResponses phi_;
    std::vector<Vector> ybar_;
    std::vector<Vector> v_;
    std::vector<Vector> v_prefix_;  // v_prefix_[i] = sum_{j < i} v_j
};

RealizedController realize_controller(const SynthesizedController& ctrl);

}  // namespace pbc
