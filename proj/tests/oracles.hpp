#pragma once

// Reference computations written independently of the library internals.

#include "pbc/lin_sys.hpp"
#include "pbc/synthesis.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using pbc::Matrix;
using pbc::Vector;

/// Small deterministic generator for property tests.
struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    Matrix matrix(int r, int c, double scale = 1.0) {
        Matrix M(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) M(i, j) = uniform(-scale, scale);
        return M;
    }
    Vector vector(int n, double scale = 1.0) { return matrix(n, 1, scale); }
};

/// Largest violation of the response recursions, evaluated tap by tap straight
/// from the plant matrices.
inline double recursion_residual(const pbc::AugmentedSystem& pl, const pbc::SystemResponses& phi) {
    const int H = phi.horizon();
    const Matrix& A = pl.A;
    const Matrix& B = pl.B;
    const Matrix& C = pl.C;
    auto xw = [&](int k) { return k > H ? phi.tail_x : Matrix(phi.xw[k]); };
    auto uw = [&](int k) { return k > H ? phi.tail_u : Matrix(phi.uw[k]); };
    auto xn = [&](int k) { return k > H ? Matrix(Matrix::Zero(pl.nx(), pl.ny())) : Matrix(phi.xn[k]); };
    auto un = [&](int k) { return k > H ? Matrix(Matrix::Zero(pl.nu(), pl.ny())) : Matrix(phi.un[k]); };
    double res = 0.0;
    auto acc = [&res](const Matrix& M) { res = std::max(res, M.size() ? M.cwiseAbs().maxCoeff() : 0.0); };
    acc(xw(1) - Matrix::Identity(pl.nx(), pl.nx()));
    acc(xn(1));
    acc(uw(1));
    for (int k = 1; k <= H + 1; ++k) {
        acc(xw(k + 1) - A * xw(k) - B * uw(k));
        acc(xn(k + 1) - A * xn(k) - B * un(k));
        acc(xw(k + 1) - xw(k) * A - xn(k) * C);
        acc(uw(k + 1) - uw(k) * A - un(k) * C);
    }
    if (pl.hold_tail) {
        if (pl.Q_half.rows()) acc(pl.Q_half * phi.tail_x * pl.H);
        if (pl.R_half.rows()) acc(pl.R_half * phi.tail_u * pl.H);
        acc(pl.C_out * phi.tail_x * pl.H);
    } else {
        acc(phi.tail_x);
        acc(phi.tail_u);
    }
    return res;
}

/// max row sum of |.| over taps of M_left * Phi(k) * M_right, k = 1..H (no tail).
inline Vector row_sums(const pbc::FirOperator<double>& op, const Matrix& left, const Matrix& right) {
    Vector s = Vector::Zero(left.rows());
    for (int k = 0; k <= op.horizon(); ++k) s += (left * op[k] * right).cwiseAbs().rowwise().sum();
    return s;
}

/// Scalar loop x+ = a x + b u + w, y = c x + n, u_t = g y_{t-1}: impulse responses
/// of x and u to w and n, summed in absolute value until they decay.
struct ScalarCosts {
    double x = 0.0;  // sum |phi_xw| + eps sum |phi_xn|
    double u = 0.0;
    bool stable = false;
};

inline ScalarCosts static_gain_cost(double a, double b, double c, double g, double eps, int steps = 5000) {
    ScalarCosts out;
    // companion form on (x_t, y_{t-1})
    Eigen::Matrix2d M;
    M << a, b * g, c, 0.0;
    if (M.eigenvalues().cwiseAbs().maxCoeff() >= 1.0 - 1e-9) return out;
    out.stable = true;
    // w impulse at t = 0 enters x_1; n impulse at t = 0 enters y_0.
    for (int channel = 0; channel < 2; ++channel) {
        double x = 0.0, y_prev = 0.0, sx = 0.0, su = 0.0;
        for (int t = 0; t < steps; ++t) {
            const double u = g * y_prev;
            const double y = c * x + (channel == 1 && t == 0 ? 1.0 : 0.0);
            const double w = channel == 0 && t == 0 ? 1.0 : 0.0;
            x = a * x + b * u + w;
            y_prev = y;
            sx += std::abs(x);
            su += std::abs(g * y_prev);
        }
        const double weight = channel == 0 ? 1.0 : eps;
        out.x += weight * sx;
        out.u += weight * su;
    }
    return out;
}

/// Naive Nadaraya-Watson with the triangular profile over a Euclidean metric.
inline std::pair<Vector, double> naive_nw(const std::vector<Vector>& Z, const std::vector<Vector>& Y,
                                          const Vector& z, double gamma, double scale) {
    Vector num = Vector::Zero(Y.front().size());
    double s = 0.0;
    for (std::size_t t = 0; t < Z.size(); ++t) {
        const double d = scale * (Z[t] - z).norm() / gamma;
        const double w = d < 1.0 ? 1.0 - d : 0.0;
        num += w * Y[t];
        s += w;
    }
    if (s == 0.0) return {Vector::Zero(num.size()), 0.0};
    return {num / s, s};
}

}  // namespace oracle
