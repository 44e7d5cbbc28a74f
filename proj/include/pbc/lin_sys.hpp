#pragma once

// Discrete-time state-space systems, FIR system responses and the L1 operator norm.
//
// Everything here is a template on the scalar type so the same algebra can be
// evaluated in float, double or long double; the rest of the library uses double.

#include "pbc/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace pbc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// x_{k+1} = A x_k + B u_k + w_k, y_k = C x_k.
template <typename Scalar = double>
struct LinearSystem {
    MatrixX<Scalar> A;
    MatrixX<Scalar> B;
    MatrixX<Scalar> C;

    LinearSystem() = default;
    LinearSystem(MatrixX<Scalar> a, MatrixX<Scalar> b, MatrixX<Scalar> c)
        : A(std::move(a)), B(std::move(b)), C(std::move(c)) {
        require(A.rows() == A.cols(), "LinearSystem: A must be square");
        require(B.rows() == A.rows(), "LinearSystem: B must have n rows");
        require(C.cols() == A.cols(), "LinearSystem: C must have n columns");
        require(A.rows() > 0 && B.cols() > 0 && C.rows() > 0, "LinearSystem: empty dimension");
    }

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }
    int p() const { return static_cast<int>(C.rows()); }
};

template <typename Scalar>
int numerical_rank(const MatrixX<Scalar>& M) {
    if (M.size() == 0) return 0;
    Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(M);
    qr.setThreshold(Scalar(1e-10));
    return static_cast<int>(qr.rank());
}

template <typename Scalar>
MatrixX<Scalar> controllability_matrix(const LinearSystem<Scalar>& sys) {
    const int n = sys.n(), m = sys.m();
    MatrixX<Scalar> ctrb(n, n * m);
    MatrixX<Scalar> block = sys.B;
    for (int k = 0; k < n; ++k) {
        ctrb.middleCols(k * m, m) = block;
        block = sys.A * block;
    }
    return ctrb;
}

template <typename Scalar>
MatrixX<Scalar> observability_matrix(const LinearSystem<Scalar>& sys) {
    const int n = sys.n(), p = sys.p();
    MatrixX<Scalar> obsv(n * p, n);
    MatrixX<Scalar> block = sys.C;
    for (int k = 0; k < n; ++k) {
        obsv.middleRows(k * p, p) = block;
        block = block * sys.A;
    }
    return obsv;
}

template <typename Scalar>
bool is_controllable(const LinearSystem<Scalar>& sys) {
    return numerical_rank<Scalar>(controllability_matrix(sys)) == sys.n();
}

template <typename Scalar>
bool is_observable(const LinearSystem<Scalar>& sys) {
    return numerical_rank<Scalar>(observability_matrix(sys)) == sys.n();
}

template <typename Derived>
typename Derived::RealScalar spectral_radius(const Eigen::MatrixBase<Derived>& M) {
    using Scalar = typename Derived::Scalar;
    if (M.size() == 0) return 0;
    Eigen::EigenSolver<MatrixX<Scalar>> es(M.eval(), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename Scalar>
VectorX<Scalar> simulate_step(const LinearSystem<Scalar>& sys, const VectorX<Scalar>& x,
                              const VectorX<Scalar>& u, const VectorX<Scalar>& w) {
    require(x.size() == sys.n(), "simulate_step: state has wrong dimension");
    require(u.size() == sys.m(), "simulate_step: input has wrong dimension");
    require(w.size() == sys.n(), "simulate_step: disturbance has wrong dimension");
    return sys.A * x + sys.B * u + w;
}

/// Finite sequence of equally sized taps Phi(0), ..., Phi(H) acting by causal
/// convolution: (Phi w)_t = sum_k Phi(k) w_{t-k}.
template <typename Scalar = double>
class FirOperator {
public:
    FirOperator() = default;
    FirOperator(int rows, int cols, int horizon) : taps_(horizon + 1, MatrixX<Scalar>::Zero(rows, cols)) {
        require(horizon >= 0, "FirOperator: negative horizon");
    }
    explicit FirOperator(std::vector<MatrixX<Scalar>> taps) : taps_(std::move(taps)) {
        require(!taps_.empty(), "FirOperator: needs at least one tap");
        for (const auto& t : taps_)
            require(t.rows() == taps_.front().rows() && t.cols() == taps_.front().cols(),
                    "FirOperator: taps must share dimensions");
    }

    int rows() const { return taps_.empty() ? 0 : static_cast<int>(taps_.front().rows()); }
    int cols() const { return taps_.empty() ? 0 : static_cast<int>(taps_.front().cols()); }
    int horizon() const { return static_cast<int>(taps_.size()) - 1; }

    MatrixX<Scalar>& operator[](int k) { return taps_.at(k); }
    const MatrixX<Scalar>& operator[](int k) const { return taps_.at(k); }

    /// Tap k, or zero beyond the stored horizon.
    MatrixX<Scalar> tap(int k) const {
        if (k < 0 || k > horizon()) return MatrixX<Scalar>::Zero(rows(), cols());
        return taps_[k];
    }

    const std::vector<MatrixX<Scalar>>& taps() const { return taps_; }

    bool strictly_causal(Scalar tol = Scalar(0)) const {
        return taps_.empty() || taps_.front().cwiseAbs().maxCoeff() <= tol;
    }

    /// Apply to a signal w_0..w_{N-1}; returns y_0..y_{N-1}.
    std::vector<VectorX<Scalar>> apply(const std::vector<VectorX<Scalar>>& w) const {
        std::vector<VectorX<Scalar>> y(w.size(), VectorX<Scalar>::Zero(rows()));
        for (std::size_t t = 0; t < w.size(); ++t)
            for (int k = 0; k <= horizon() && k <= static_cast<int>(t); ++k) y[t] += taps_[k] * w[t - k];
        return y;
    }

    template <typename Derived>
    FirOperator left(const Eigen::MatrixBase<Derived>& M) const {
        std::vector<MatrixX<Scalar>> out;
        out.reserve(taps_.size());
        for (const auto& t : taps_) out.push_back(M * t);
        return FirOperator(std::move(out));
    }

    template <typename Derived>
    FirOperator right(const Eigen::MatrixBase<Derived>& M) const {
        std::vector<MatrixX<Scalar>> out;
        out.reserve(taps_.size());
        for (const auto& t : taps_) out.push_back(t * M);
        return FirOperator(std::move(out));
    }

    FirOperator& operator+=(const FirOperator& other) {
        require(rows() == other.rows() && cols() == other.cols(), "FirOperator: dimension mismatch");
        if (other.horizon() > horizon()) taps_.resize(other.taps_.size(), MatrixX<Scalar>::Zero(rows(), cols()));
        for (int k = 0; k <= other.horizon(); ++k) taps_[k] += other.taps_[k];
        return *this;
    }

    FirOperator& operator*=(Scalar s) {
        for (auto& t : taps_) t *= s;
        return *this;
    }

private:
    std::vector<MatrixX<Scalar>> taps_;
};

template <typename Scalar>
FirOperator<Scalar> operator+(FirOperator<Scalar> a, const FirOperator<Scalar>& b) {
    a += b;
    return a;
}

template <typename Scalar>
FirOperator<Scalar> operator*(Scalar s, FirOperator<Scalar> a) {
    a *= s;
    return a;
}

/// Stack operators with equal column count on top of each other.
template <typename Scalar>
FirOperator<Scalar> vstack(const FirOperator<Scalar>& top, const FirOperator<Scalar>& bottom) {
    require(top.cols() == bottom.cols(), "vstack: column mismatch");
    const int H = std::max(top.horizon(), bottom.horizon());
    std::vector<MatrixX<Scalar>> taps;
    for (int k = 0; k <= H; ++k) {
        MatrixX<Scalar> t(top.rows() + bottom.rows(), top.cols());
        t << top.tap(k), bottom.tap(k);
        taps.push_back(std::move(t));
    }
    return FirOperator<Scalar>(std::move(taps));
}

/// Induced l_inf -> l_inf gain of the block-Toeplitz operator:
/// max_i sum_k sum_j |Phi(k)_ij|.
template <typename Scalar>
Scalar l1_norm(const FirOperator<Scalar>& op) {
    if (op.rows() == 0) return Scalar(0);
    VectorX<Scalar> row_sums = VectorX<Scalar>::Zero(op.rows());
    for (const auto& t : op.taps()) row_sums += t.cwiseAbs().rowwise().sum();
    return row_sums.maxCoeff();
}

/// Input signal with ||w||_inf <= 1 that attains the L1 norm at output row `row`
/// and time index `horizon`: w_{H-k} = sign(Phi(k)_{row,:}).
template <typename Scalar>
std::vector<VectorX<Scalar>> l1_witness(const FirOperator<Scalar>& op, int row) {
    const int H = op.horizon();
    std::vector<VectorX<Scalar>> w(H + 1, VectorX<Scalar>::Zero(op.cols()));
    for (int k = 0; k <= H; ++k)
        for (int j = 0; j < op.cols(); ++j) w[H - k](j) = op[k](row, j) >= 0 ? Scalar(1) : Scalar(-1);
    return w;
}

template <typename Scalar>
void write_csv(std::ostream& os, const FirOperator<Scalar>& op, const std::string& name = "phi") {
    os << "operator,k,row";
    for (int j = 0; j < op.cols(); ++j) os << ",c" << j;
    os << '\n';
    os.precision(17);
    for (int k = 0; k <= op.horizon(); ++k)
        for (int i = 0; i < op.rows(); ++i) {
            os << name << ',' << k << ',' << i;
            for (int j = 0; j < op.cols(); ++j) os << ',' << op[k](i, j);
            os << '\n';
        }
}

/// max{||C Phi_x(k)||, ||C Phi_xn(k)||} <= M rho^k.
struct DecayEnvelope {
    double M = 1.0;
    double rho = 0.5;

    double at(int k) const { return M * std::pow(rho, k); }
};

/// Observer-based output feedback:
///   u_t = K xhat_t + u_ref_t,  xhat_{t+1} = A xhat_t + B u_t + L (y_t - C xhat_t).
/// Strictly proper: u_t depends on y_0..y_{t-1} only.
template <typename Scalar = double>
class StaticOutputController {
public:
    StaticOutputController() = default;
    StaticOutputController(const LinearSystem<Scalar>& sys, MatrixX<Scalar> K, MatrixX<Scalar> L)
        : sys_(sys), K_(std::move(K)), L_(std::move(L)), xhat_(VectorX<Scalar>::Zero(sys.n())) {
        require(K_.rows() == sys.m() && K_.cols() == sys.n(), "StaticOutputController: K must be m x n");
        require(L_.rows() == sys.n() && L_.cols() == sys.p(), "StaticOutputController: L must be n x p");
    }

    const MatrixX<Scalar>& K() const { return K_; }
    const MatrixX<Scalar>& L() const { return L_; }
    const VectorX<Scalar>& estimate() const { return xhat_; }
    const LinearSystem<Scalar>& system() const { return sys_; }

    void reset() { xhat_.setZero(); }

    VectorX<Scalar> step(const VectorX<Scalar>& y, const VectorX<Scalar>& u_ref) {
        VectorX<Scalar> u = K_ * xhat_ + u_ref;
        xhat_ = sys_.A * xhat_ + sys_.B * u + L_ * (y - sys_.C * xhat_);
        return u;
    }

    /// Closed-loop matrix of the (x, e = xhat - x) dynamics.
    MatrixX<Scalar> closed_loop_matrix() const {
        const int n = sys_.n();
        MatrixX<Scalar> M = MatrixX<Scalar>::Zero(2 * n, 2 * n);
        M.topLeftCorner(n, n) = sys_.A + sys_.B * K_;
        M.topRightCorner(n, n) = sys_.B * K_;
        M.bottomRightCorner(n, n) = sys_.A - L_ * sys_.C;
        return M;
    }

    bool stabilizing() const {
        return spectral_radius(MatrixX<Scalar>(sys_.A + sys_.B * K_)) < Scalar(1) &&
               spectral_radius(MatrixX<Scalar>(sys_.A - L_ * sys_.C)) < Scalar(1);
    }

private:
    LinearSystem<Scalar> sys_;
    MatrixX<Scalar> K_;
    MatrixX<Scalar> L_;
    VectorX<Scalar> xhat_;
};

template <typename Scalar = double>
struct ClosedLoopResponses {
    FirOperator<Scalar> x;   // n x n, response to x_0 (observer starts at zero)
    FirOperator<Scalar> xu;  // n x m, response to u_ref
    FirOperator<Scalar> xn;  // n x p, response to measurement noise
    FirOperator<Scalar> un;  // m x p, input response to measurement noise
};

/// Unrolls the (x, e) block dynamics of an observer-based loop so that
///   x_t = Phi_x(t) x_0 + sum_{k>=1} Phi_xu(k) u_ref_{t-k} + Phi_xn(k) eta_{t-k}.
template <typename Scalar>
ClosedLoopResponses<Scalar> closed_loop_responses(const LinearSystem<Scalar>& sys,
                                                  const StaticOutputController<Scalar>& ctrl, int horizon) {
    require(horizon >= 1, "closed_loop_responses: horizon must be >= 1");
    const MatrixX<Scalar> M = ctrl.closed_loop_matrix();
    const Scalar radius = spectral_radius(M);
    if (!(radius < Scalar(1)))
        throw SynthesisError("closed_loop_responses: closed loop is unstable (spectral radius " +
                             std::to_string(static_cast<double>(radius)) + ")");
    const int n = sys.n(), m = sys.m(), p = sys.p();

    // Columns: [x0 (with e0 = -x0) | u_ref | eta].
    MatrixX<Scalar> inputs = MatrixX<Scalar>::Zero(2 * n, n + m + p);
    inputs.block(0, 0, n, n).setIdentity();
    inputs.block(n, 0, n, n) = -MatrixX<Scalar>::Identity(n, n);
    inputs.block(0, n, n, m) = sys.B;
    inputs.block(n, n + m, n, p) = ctrl.L();

    MatrixX<Scalar> state_out(n, 2 * n), input_out(m, 2 * n);
    state_out << MatrixX<Scalar>::Identity(n, n), MatrixX<Scalar>::Zero(n, n);
    input_out << ctrl.K(), ctrl.K();

    ClosedLoopResponses<Scalar> r{FirOperator<Scalar>(n, n, horizon), FirOperator<Scalar>(n, m, horizon),
                                  FirOperator<Scalar>(n, p, horizon), FirOperator<Scalar>(m, p, horizon)};
    r.x[0] = MatrixX<Scalar>::Identity(n, n);
    // power = M^{k-1} * inputs
    MatrixX<Scalar> power = inputs;
    for (int k = 1; k <= horizon; ++k) {
        const MatrixX<Scalar> xs = state_out * power;
        const MatrixX<Scalar> us = input_out * power;
        r.x[k] = state_out * (M * power.leftCols(n));
        r.xu[k] = xs.middleCols(n, m);
        r.xn[k] = xs.rightCols(p);
        r.un[k] = us.rightCols(p);
        power = M * power;
    }
    return r;
}

/// Envelope for Eq.-8-style decay of max{||C Phi_x(k)||_inf, ||C Phi_xn(k)||_inf}.
/// rho is the geometric rate of the second half of the computed taps, nudged
/// towards 1 so that polynomial factors die out; M is the smallest constant that
/// makes the envelope hold on every computed tap.
template <typename Scalar>
DecayEnvelope fit_decay_envelope(const ClosedLoopResponses<Scalar>& responses, const LinearSystem<Scalar>& sys) {
    const int H = responses.x.horizon();
    std::vector<double> norms(H + 1, 0.0);
    for (int k = 0; k <= H; ++k) {
        const double a = static_cast<double>(induced_inf_norm(MatrixX<Scalar>(sys.C * responses.x.tap(k))));
        const double b = static_cast<double>(induced_inf_norm(MatrixX<Scalar>(sys.C * responses.xn.tap(k))));
        norms[k] = std::max(a, b);
    }
    const double peak = *std::max_element(norms.begin(), norms.end());
    const int k0 = std::max(sys.n(), H / 2);
    double rho = -1.0;
    if (k0 < H && norms[k0] > 1e-13 * peak)
        for (int k = k0 + 1; k <= H; ++k)
            rho = std::max(rho, std::pow(norms[k] / norms[k0], 1.0 / (k - k0)));
    if (rho < 0.0) rho = 0.5;  // responses vanish after the first taps
    if (rho >= 1.0)
        throw SynthesisError("fit_decay_envelope: tap norms do not decay (tail rate " + std::to_string(rho) + ")");
    rho += 0.02 * (1.0 - rho);
    rho = std::clamp(rho, 1e-6, 1.0 - 1e-6);
    double M = 1.0;
    for (int k = 0; k <= H; ++k) M = std::max(M, norms[k] / std::pow(rho, k));
    return {M, rho};
}

/// Discrete-time algebraic Riccati equation
///   P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA
/// solved by fixed-point iteration.
template <typename Scalar>
MatrixX<Scalar> solve_dare(const MatrixX<Scalar>& A, const MatrixX<Scalar>& B, const MatrixX<Scalar>& Q,
                           const MatrixX<Scalar>& R, int max_iterations = 100000, Scalar tol = Scalar(1e-13)) {
    MatrixX<Scalar> P = Q;
    for (int it = 0; it < max_iterations; ++it) {
        const MatrixX<Scalar> BtP = B.transpose() * P;
        const MatrixX<Scalar> gain = (R + BtP * B).ldlt().solve(BtP * A);
        MatrixX<Scalar> next = Q + A.transpose() * P * A - A.transpose() * P * B * gain;
        next = Scalar(0.5) * (next + next.transpose());
        const Scalar change = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (change <= tol * std::max(Scalar(1), P.cwiseAbs().maxCoeff())) return P;
    }
    throw NumericalError("solve_dare: Riccati iteration did not converge");
}

/// Infinite-horizon LQR gain with the u = K x sign convention.
template <typename Scalar>
MatrixX<Scalar> dlqr(const LinearSystem<Scalar>& sys, const MatrixX<Scalar>& Q, const MatrixX<Scalar>& R) {
    const MatrixX<Scalar> P = solve_dare<Scalar>(sys.A, sys.B, Q, R);
    return -(R + sys.B.transpose() * P * sys.B).ldlt().solve(sys.B.transpose() * P * sys.A);
}

/// Steady-state one-step-predictor Kalman gain for process covariance W and
/// measurement covariance V (observer form xhat+ = A xhat + B u + L (y - C xhat)).
template <typename Scalar>
MatrixX<Scalar> kalman_predictor_gain(const LinearSystem<Scalar>& sys, const MatrixX<Scalar>& W,
                                      const MatrixX<Scalar>& V) {
    const MatrixX<Scalar> At = sys.A.transpose();
    const MatrixX<Scalar> Ct = sys.C.transpose();
    const MatrixX<Scalar> P = solve_dare<Scalar>(At, Ct, W, V);
    const MatrixX<Scalar> S = sys.C * P * Ct + V;
    return (S.transpose().ldlt().solve((sys.A * P * Ct).transpose())).transpose();
}

}  // namespace pbc
