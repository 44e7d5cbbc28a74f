#pragma once

// Dense primal simplex for
//   minimize c'x  subject to  A_ineq x <= b_ineq,  A_eq x = b_eq,  lower <= x <= upper.

#include "pbc/common.hpp"

#include <string>

namespace pbc {

struct LpProblem {
    Vector c;
    Matrix A_ineq;
    Vector b_ineq;
    Matrix A_eq;
    Vector b_eq;
    Vector lower;  // -inf allowed
    Vector upper;  // +inf allowed

    /// Problem with `n` variables, no constraints and bounds [0, inf).
    explicit LpProblem(int n = 0);

    int variables() const { return static_cast<int>(c.size()); }
    void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(LpStatus status);

struct LpOptions {
    double tolerance = 1e-9;
    int max_iterations = 200000;
    /// Iterations without strict objective progress before switching to Bland's rule.
    int stall_limit = 50;
};

struct LpResult {
    LpStatus status = LpStatus::NumericalFailure;
    Vector x;
    double objective = 0.0;
    /// Multipliers of the inequality (<= 0 at optimum) and equality rows.
    Vector dual_ineq;
    Vector dual_eq;
    /// |primal - dual| / (1 + |primal|) recomputed from a fresh basis factorization.
    double duality_gap = kInf;
    /// Largest violation of any constraint or bound by x.
    double primal_residual = kInf;
    /// Infeasible: Farkas multipliers (dual_ineq, dual_eq layout stacked [ineq; eq]).
    /// Unbounded: a recession direction d with c'd < 0.
    Vector certificate;
    int iterations = 0;
    std::string diagnostics;
};

LpResult solve_lp(const LpProblem& problem, const LpOptions& options = {});

}  // namespace pbc
