#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error hierarchy. Every failure the library reports is one of these.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input: wrong dimensions, out-of-range parameters, schema violations.
struct InputError : Error {
    using Error::Error;
};

// Controller design failed: unstable loop, infeasible synthesis, rank deficiency.
struct SynthesisError : Error {
    using Error::Error;
};

// Linear algebra broke down (singular systems, non-convergence).
struct NumericalError : Error {
    using Error::Error;
};

// A bound was requested outside the regime where it holds.
struct CertificateUnavailable : Error {
    using Error::Error;
};

// Simulated state left the configured guard or became non-finite.
struct DivergenceError : Error {
    using Error::Error;
};

// A scalar bound together with the side conditions it was evaluated under.
struct BoundValue {
    double value = 0.0;
    bool warning = false;
    std::string note;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InputError(message);
}

// ||v||_inf with the convention that the empty vector has norm zero.
template <typename Derived>
double inf_norm(const Eigen::MatrixBase<Derived>& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Induced infinity norm of a matrix: maximum absolute row sum.
template <typename Derived>
double induced_inf_norm(const Eigen::MatrixBase<Derived>& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace pbc
