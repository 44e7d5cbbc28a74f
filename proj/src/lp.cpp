#include "pbc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pbc {

LpProblem::LpProblem(int n)
    : c(Vector::Zero(n)),
      A_ineq(0, n),
      b_ineq(0),
      A_eq(0, n),
      b_eq(0),
      lower(Vector::Zero(n)),
      upper(Vector::Constant(n, kInf)) {}

void LpProblem::validate() const {
    const auto n = c.size();
    require(A_ineq.cols() == n && A_eq.cols() == n, "LpProblem: constraint matrices must have one column per variable");
    require(A_ineq.rows() == b_ineq.size(), "LpProblem: inequality rows and right-hand side differ");
    require(A_eq.rows() == b_eq.size(), "LpProblem: equality rows and right-hand side differ");
    require(lower.size() == n && upper.size() == n, "LpProblem: bounds must have one entry per variable");
    require(c.allFinite() && A_ineq.allFinite() && A_eq.allFinite() && b_ineq.allFinite() && b_eq.allFinite(),
            "LpProblem: data must be finite");
    for (Eigen::Index j = 0; j < n; ++j) {
        require(!std::isnan(lower(j)) && !std::isnan(upper(j)), "LpProblem: NaN bound");
        require(lower(j) <= upper(j), "LpProblem: lower bound above upper bound");
        require(lower(j) < kInf && upper(j) > -kInf, "LpProblem: bound excludes every value");
    }
}

std::string to_string(LpStatus status) {
    switch (status) {
        case LpStatus::Optimal: return "optimal";
        case LpStatus::Infeasible: return "infeasible";
        case LpStatus::Unbounded: return "unbounded";
        case LpStatus::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kArtificial = -1;

// Equality form A x = b, b >= 0, with x_j >= 0 or free.
struct StandardForm {
    Matrix A;
    Vector b;
    Vector c;
    double c0 = 0.0;
    std::vector<char> free_col;
    // Original variable j = offset(j) + sign(j) * x'_j.
    Vector offset;
    Vector sign;
    int n_orig = 0;
    int m_ineq = 0;
    int m_eq = 0;
    int m_bound = 0;
    Vector row_mult;  // standard row i = row_mult(i) * original row i
};

StandardForm to_standard(const LpProblem& lp) {
    StandardForm sf;
    const int n = lp.variables();
    sf.n_orig = n;
    sf.offset = Vector::Zero(n);
    sf.sign = Vector::Ones(n);
    std::vector<int> bounded;
    std::vector<char> is_free(n, 0);
    for (int j = 0; j < n; ++j) {
        const bool lo = std::isfinite(lp.lower(j)), hi = std::isfinite(lp.upper(j));
        if (lo) {
            sf.offset(j) = lp.lower(j);
            if (hi) bounded.push_back(j);
        } else if (hi) {
            sf.offset(j) = lp.upper(j);
            sf.sign(j) = -1.0;
        } else {
            is_free[j] = 1;
        }
    }
    sf.m_ineq = static_cast<int>(lp.A_ineq.rows());
    sf.m_eq = static_cast<int>(lp.A_eq.rows());
    sf.m_bound = static_cast<int>(bounded.size());
    const int m = sf.m_ineq + sf.m_eq + sf.m_bound;
    const int N = n + sf.m_ineq + sf.m_bound;
    sf.A = Matrix::Zero(m, N);
    sf.b = Vector::Zero(m);
    sf.c = Vector::Zero(N);
    sf.free_col.assign(N, 0);
    for (int j = 0; j < n; ++j) sf.free_col[j] = is_free[j];

    const Vector sign = sf.sign;
    sf.A.topLeftCorner(sf.m_ineq, n) = lp.A_ineq * sign.asDiagonal();
    sf.b.head(sf.m_ineq) = lp.b_ineq - lp.A_ineq * sf.offset;
    sf.A.block(sf.m_ineq, 0, sf.m_eq, n) = lp.A_eq * sign.asDiagonal();
    sf.b.segment(sf.m_ineq, sf.m_eq) = lp.b_eq - lp.A_eq * sf.offset;
    for (int i = 0; i < sf.m_ineq; ++i) sf.A(i, n + i) = 1.0;
    for (int k = 0; k < sf.m_bound; ++k) {
        const int row = sf.m_ineq + sf.m_eq + k;
        const int j = bounded[k];
        sf.A(row, j) = 1.0;
        sf.A(row, n + sf.m_ineq + k) = 1.0;
        sf.b(row) = lp.upper(j) - lp.lower(j);
    }
    sf.c.head(n) = lp.c.cwiseProduct(sign);
    sf.c0 = lp.c.dot(sf.offset);
    // Rows are flipped to b >= 0 and equilibrated to b <= 1, so one large
    // right-hand side does not loosen the tolerances of every other row.
    sf.row_mult = Vector::Ones(m);
    for (int i = 0; i < m; ++i) {
        const double mult = (sf.b(i) < 0 ? -1.0 : 1.0) / std::max(1.0, std::abs(sf.b(i)));
        if (mult == 1.0) continue;
        sf.row_mult(i) = mult;
        sf.A.row(i) *= mult;
        sf.b(i) *= mult;
    }
    return sf;
}

// Compact tableau: only nonbasic structural columns are stored. Rows whose basic
// variable is free are frozen: free variables never leave the basis, so those rows
// never take part in a ratio test.
class Simplex {
public:
    Simplex(const StandardForm& sf, const LpOptions& opt) : sf_(sf), opt_(opt) {
        m_ = static_cast<int>(sf.A.rows());
        N_ = static_cast<int>(sf.A.cols());
        T_ = sf.A;
        W_ = N_;
        rhs_ = sf.b;
        basis_.assign(m_, kArtificial);
        frozen_.assign(m_, 0);
        col_.resize(N_);
        var_.resize(N_);
        for (int j = 0; j < N_; ++j) col_[j] = var_[j] = j;
        rows_.resize(m_);
        for (int i = 0; i < m_; ++i) rows_[i] = i;
        scale_ = std::max(1.0, sf.b.cwiseAbs().maxCoeff());
        d_ = Vector::Zero(N_);
        recompute_norms();
    }

    LpResult run() {
        LpResult res;
        crash();
        if (std::any_of(basis_.begin(), basis_.end(), [](int b) { return b == kArtificial; })) {
            set_phase_costs(1);
            const LpStatus s = iterate(res);
            if (s == LpStatus::NumericalFailure) return fail(res, "phase I iteration limit");
            const double infeas = artificial_sum();
            if (infeas > 1e-7 * scale_) return infeasible(res, infeas);
            drive_out_artificials();
        }
        for (int attempt = 0; attempt < 4; ++attempt) {
            set_phase_costs(2);
            const LpStatus s = iterate(res);
            if (s == LpStatus::Unbounded) return unbounded(res);
            if (s == LpStatus::NumericalFailure) return fail(res, "phase II iteration limit");
            if (refactor_and_check(res)) return res;
        }
        return fail(res, "basis refactorization kept revealing infeasibility");
    }

private:
    const StandardForm& sf_;
    LpOptions opt_;
    int m_ = 0, N_ = 0;
    int W_ = 0;               // stored (nonbasic) columns
    RowMatrix T_;             // m x W_ used
    Vector rhs_;
    Vector d_;                // reduced costs of stored columns
    Vector colsq_;            // squared column norms, for steepest-edge pricing
    std::vector<int> basis_;  // variable basic in each row, kArtificial for artificials
    std::vector<char> frozen_;
    std::vector<int> col_;    // stored column of each variable, -1 when basic
    std::vector<int> var_;    // variable of each stored column
    std::vector<int> rows_;   // standard-form row of each tableau row
    double scale_ = 1.0;
    int iterations_ = 0;
    int unbounded_var_ = -1;
    double unbounded_dir_ = 1.0;

    bool is_free(int j) const { return sf_.free_col[j] != 0; }

    void recompute_norms() {
        colsq_ = Vector::Zero(W_);
        for (int i = 0; i < m_; ++i) colsq_ += T_.row(i).head(W_).transpose().cwiseAbs2();
    }

    void drop_column(int q) {
        const int last = W_ - 1;
        if (q != last) {
            T_.col(q).swap(T_.col(last));
            std::swap(d_(q), d_(last));
            std::swap(colsq_(q), colsq_(last));
            var_[q] = var_[last];
            col_[var_[q]] = q;
        }
        --W_;
    }

    // Variable in stored column q enters at row r.
    void pivot(int r, int q) {
        const int entering = var_[q];
        const int leaving = basis_[r];
        const Vector colq = T_.col(q).head(m_);
        const double dq = d_(q);
        const double p = colq(r);
        // Column q now holds the leaving variable: its unit column before the pivot.
        T_.col(q).setZero();
        T_(r, q) = 1.0;
        d_(q) = 0.0;
        auto row_r = T_.row(r).head(W_);
        row_r /= p;
        rhs_(r) /= p;
        colsq_.head(W_) = row_r.transpose().cwiseAbs2();
        for (int i = 0; i < m_; ++i) {
            if (i == r) continue;
            const double f = colq(i);
            if (f != 0.0) {
                T_.row(i).head(W_) -= f * row_r;
                rhs_(i) -= f * rhs_(r);
                if (rhs_(i) < 0.0 && rhs_(i) > -opt_.tolerance * scale_) rhs_(i) = 0.0;
            }
            colsq_.head(W_) += T_.row(i).head(W_).transpose().cwiseAbs2();
        }
        if (dq != 0.0) d_.head(W_) -= dq * row_r.transpose();
        basis_[r] = entering;
        col_[entering] = -1;
        if (is_free(entering)) frozen_[r] = 1;
        if (leaving == kArtificial) {
            drop_column(q);
        } else {
            var_[q] = leaving;
            col_[leaving] = q;
        }
    }

    // Two-pass (Harris) ratio test for stored column q in direction dir; -1 if none.
    // Among rows within a small tolerance of the minimum ratio, the largest pivot wins.
    int ratio_test(int q, double dir, bool bland) const {
        const double feas = opt_.tolerance * scale_;
        double bound = kInf;
        for (int i = 0; i < m_; ++i) {
            if (frozen_[i]) continue;
            const double a = dir * T_(i, q);
            if (a <= opt_.tolerance) continue;
            bound = std::min(bound, (std::max(rhs_(i), 0.0) + feas) / a);
        }
        if (!std::isfinite(bound)) return -1;
        int best = -1;
        double best_piv = 0.0;
        for (int i = 0; i < m_; ++i) {
            if (frozen_[i]) continue;
            const double a = dir * T_(i, q);
            if (a <= opt_.tolerance) continue;
            if (std::max(rhs_(i), 0.0) / a > bound) continue;
            bool take = best < 0;
            if (!take) take = bland ? basis_[i] < basis_[best] : a > best_piv;
            if (take) {
                best = i;
                best_piv = a;
            }
        }
        return best;
    }

    // Replace artificials by structural columns wherever a feasible pivot exists.
    void crash() {
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] != kArtificial) continue;
            for (int q = 0; q < W_; ++q) {
                if (is_free(var_[q]) || T_(i, q) <= opt_.tolerance) continue;
                const int r = ratio_test(q, 1.0, false);
                if (r < 0) continue;
                const double ri = rhs_(i) / T_(i, q);
                const double rr = rhs_(r) / T_(r, q);
                if (r == i || ri <= rr + 1e-14 * (1.0 + rr)) {
                    pivot(i, q);
                    break;
                }
            }
        }
    }

    Matrix basis_matrix() const {
        Matrix B(m_, m_);
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] == kArtificial) {
                B.col(i).setZero();
                B(i, i) = 1.0;
            } else {
                for (int k = 0; k < m_; ++k) B(k, i) = sf_.A(rows_[k], basis_[i]);
            }
        }
        return B;
    }

    Vector column(int j) const {
        Vector a(m_);
        for (int k = 0; k < m_; ++k) a(k) = sf_.A(rows_[k], j);
        return a;
    }

    Vector reduced_b() const {
        Vector b(m_);
        for (int k = 0; k < m_; ++k) b(k) = sf_.b(rows_[k]);
        return b;
    }

    Vector basic_costs(int phase) const {
        Vector cb(m_);
        for (int i = 0; i < m_; ++i)
            cb(i) = basis_[i] == kArtificial ? (phase == 1 ? 1.0 : 0.0) : (phase == 1 ? 0.0 : sf_.c(basis_[i]));
        return cb;
    }

    // Reduced costs of the stored columns from duals y.
    void reduced_costs(const Vector& y, int phase) {
        for (int q = 0; q < W_; ++q) {
            const int j = var_[q];
            double v = phase == 1 ? 0.0 : sf_.c(j);
            for (int k = 0; k < m_; ++k) v -= sf_.A(rows_[k], j) * y(k);
            d_(q) = v;
        }
    }

    void set_phase_costs(int phase) {
        const Eigen::PartialPivLU<Matrix> lu(basis_matrix());
        reduced_costs(lu.transpose().solve(basic_costs(phase)), phase);
    }

    double artificial_sum() const {
        double s = 0.0;
        for (int i = 0; i < m_; ++i)
            if (basis_[i] == kArtificial) s += rhs_(i);
        return s;
    }

    LpStatus iterate(LpResult& res) {
        bool bland = false;
        int stall = 0;
        while (true) {
            if (iterations_ >= opt_.max_iterations) return LpStatus::NumericalFailure;
            int q = -1;
            double best = 0.0;
            for (int k = 0; k < W_; ++k) {
                const double dk = d_(k);
                double score = 0.0;
                if (is_free(var_[k]))
                    score = std::abs(dk);
                else if (dk < 0)
                    score = -dk;
                if (score <= opt_.tolerance) continue;
                if (bland) {
                    if (q < 0 || var_[k] < var_[q]) q = k;
                    continue;
                }
                score = score * score / (1.0 + colsq_(k));
                if (score > best) {
                    best = score;
                    q = k;
                }
            }
            if (q < 0) return LpStatus::Optimal;
            const double dir = (is_free(var_[q]) && d_(q) > 0) ? -1.0 : 1.0;
            const int r = ratio_test(q, dir, bland);
            if (r < 0) {
                unbounded_var_ = var_[q];
                unbounded_dir_ = dir;
                return LpStatus::Unbounded;
            }
            const double gain = d_(q) * rhs_(r) / T_(r, q);
            pivot(r, q);
            ++iterations_;
            res.iterations = iterations_;
            if (gain < -1e-12) {
                stall = 0;
                bland = false;
            } else if (++stall > opt_.stall_limit) {
                bland = true;
            }
        }
    }

    void remove_row(int r) {
        const int last = m_ - 1;
        if (r != last) {
            T_.row(r).head(W_) = T_.row(last).head(W_);
            rhs_(r) = rhs_(last);
            basis_[r] = basis_[last];
            frozen_[r] = frozen_[last];
            rows_[r] = rows_[last];
        }
        T_.conservativeResize(last, Eigen::NoChange);
        rhs_.conservativeResize(last);
        basis_.pop_back();
        frozen_.pop_back();
        rows_.pop_back();
        --m_;
    }

    void drive_out_artificials() {
        for (int i = m_ - 1; i >= 0; --i) {
            if (basis_[i] != kArtificial) continue;
            int best = -1;
            double big = 1e-7;
            for (int q = 0; q < W_; ++q) {
                if (std::abs(T_(i, q)) > big) {
                    big = std::abs(T_(i, q));
                    best = q;
                }
            }
            if (best >= 0) {
                pivot(i, best);
            } else {
                remove_row(i);  // linearly dependent equality
            }
        }
    }

    // Rebuild the tableau from the original data for the current basis.
    void rebuild(const Eigen::PartialPivLU<Matrix>& lu, const Vector& xB) {
        Matrix AN(m_, W_);
        for (int q = 0; q < W_; ++q) AN.col(q) = column(var_[q]);
        T_.topLeftCorner(m_, W_) = lu.solve(AN);
        rhs_ = xB;
        for (int i = 0; i < m_; ++i)
            if (!frozen_[i] && rhs_(i) < 0) rhs_(i) = 0.0;
        recompute_norms();
    }

    bool refactor_and_check(LpResult& res) {
        const Matrix B = basis_matrix();
        const Eigen::PartialPivLU<Matrix> lu(B);
        const Vector b = reduced_b();
        const Vector xB = lu.solve(b);
        const Vector y = lu.transpose().solve(basic_costs(2));
        reduced_costs(y, 2);

        const double feas_tol = 1e-9 * scale_;
        const double opt_tol = 1e-9 * std::max(1.0, sf_.c.cwiseAbs().maxCoeff());
        double primal_infeas = (B * xB - b).cwiseAbs().maxCoeff();
        for (int i = 0; i < m_; ++i)
            if (!frozen_[i]) primal_infeas = std::max(primal_infeas, -xB(i));
        double dual_infeas = 0.0;
        for (int q = 0; q < W_; ++q)
            dual_infeas = std::max(dual_infeas, is_free(var_[q]) ? std::abs(d_(q)) : std::max(0.0, -d_(q)));
        if (primal_infeas > feas_tol || dual_infeas > opt_tol) {
            rebuild(lu, xB);
            return false;
        }

        Vector x = Vector::Zero(N_);
        for (int i = 0; i < m_; ++i)
            if (basis_[i] >= 0) x(basis_[i]) = xB(i);
        const double primal = sf_.c.dot(x);
        const double dual = b.dot(y);
        res.status = LpStatus::Optimal;
        res.x = sf_.offset + sf_.sign.cwiseProduct(x.head(sf_.n_orig));
        res.objective = primal + sf_.c0;
        res.duality_gap = std::abs(primal - dual) / (1.0 + std::abs(primal + sf_.c0));
        Vector y_full = Vector::Zero(sf_.A.rows());
        for (int k = 0; k < m_; ++k) y_full(rows_[k]) = y(k) * sf_.row_mult(rows_[k]);
        res.dual_ineq = y_full.head(sf_.m_ineq);
        res.dual_eq = y_full.segment(sf_.m_ineq, sf_.m_eq);
        std::ostringstream os;
        os << "iterations=" << iterations_ << " dual_infeasibility=" << dual_infeas;
        res.diagnostics = os.str();
        return true;
    }

    LpResult& infeasible(LpResult& res, double infeas) {
        res.status = LpStatus::Infeasible;
        const Vector y = Eigen::PartialPivLU<Matrix>(basis_matrix()).transpose().solve(basic_costs(1));
        Vector cert = Vector::Zero(sf_.A.rows());
        for (int k = 0; k < m_; ++k) cert(rows_[k]) = y(k) * sf_.row_mult(rows_[k]);
        res.certificate = cert;
        std::ostringstream os;
        os << "phase I optimum " << infeas << " > 0";
        res.diagnostics = os.str();
        return res;
    }

    LpResult& unbounded(LpResult& res) {
        res.status = LpStatus::Unbounded;
        const Vector dB = Eigen::PartialPivLU<Matrix>(basis_matrix()).solve(column(unbounded_var_));
        Vector ray = Vector::Zero(N_);
        ray(unbounded_var_) = unbounded_dir_;
        for (int i = 0; i < m_; ++i)
            if (basis_[i] >= 0) ray(basis_[i]) = -unbounded_dir_ * dB(i);
        res.certificate = sf_.sign.cwiseProduct(ray.head(sf_.n_orig));
        res.diagnostics = "objective decreases without bound along the certificate direction";
        return res;
    }

    LpResult& fail(LpResult& res, const std::string& why) {
        res.status = LpStatus::NumericalFailure;
        res.diagnostics = why;
        return res;
    }
};

double primal_violation(const LpProblem& lp, const Vector& x) {
    double v = 0.0;
    if (lp.A_ineq.rows() > 0) v = std::max(v, (lp.A_ineq * x - lp.b_ineq).cwiseMax(0.0).maxCoeff());
    if (lp.A_eq.rows() > 0) v = std::max(v, (lp.A_eq * x - lp.b_eq).cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        v = std::max(v, lp.lower(j) - x(j));
        v = std::max(v, x(j) - lp.upper(j));
    }
    return v;
}

}  // namespace

LpResult solve_lp(const LpProblem& problem, const LpOptions& options) {
    problem.validate();
    const StandardForm sf = to_standard(problem);
    Simplex simplex(sf, options);
    LpResult res = simplex.run();
    if (res.status == LpStatus::Optimal) res.primal_residual = primal_violation(problem, res.x);
    return res;
}

}  // namespace pbc
