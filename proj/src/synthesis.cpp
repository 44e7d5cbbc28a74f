#include "pbc/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace pbc {

namespace {

void require_diagonal_psd(const Matrix& M, int dim, const std::string& name) {
    require(M.rows() == dim && M.cols() == dim, name + " has wrong dimensions");
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            if (i == j)
                require(M(i, i) >= 0.0, name + " must be positive semidefinite");
            else
                require(M(i, j) == 0.0, name + " must be diagonal");
        }
}

Matrix sqrt_rows(const Matrix& W, int offset, int total_cols) {
    std::vector<int> keep;
    for (int i = 0; i < W.rows(); ++i)
        if (W(i, i) > 0) keep.push_back(i);
    Matrix out = Matrix::Zero(static_cast<int>(keep.size()), total_cols);
    for (std::size_t r = 0; r < keep.size(); ++r) out(r, offset + keep[r]) = std::sqrt(W(keep[r], keep[r]));
    return out;
}

// Matrix-valued affine function X(theta) = X0 + sum_i theta_i X_i. Row (i + j * rows)
// of `coef` holds [X0(i,j), X_1(i,j), ...].
struct Affine {
    int rows = 0, cols = 0;
    Matrix coef;

    static Affine constant(const Matrix& M, int params) {
        Affine a{static_cast<int>(M.rows()), static_cast<int>(M.cols()), Matrix::Zero(M.size(), 1 + params)};
        for (int j = 0; j < a.cols; ++j)
            for (int i = 0; i < a.rows; ++i) a.coef(i + j * a.rows, 0) = M(i, j);
        return a;
    }

    static Affine parameter(int rows, int cols, int offset, int params) {
        Affine a{rows, cols, Matrix::Zero(rows * cols, 1 + params)};
        for (int e = 0; e < rows * cols; ++e) a.coef(e, 1 + offset + e) = 1.0;
        return a;
    }

    Affine left(const Matrix& M) const {
        Affine out{static_cast<int>(M.rows()), cols, Matrix(M.rows() * cols, coef.cols())};
        for (int j = 0; j < cols; ++j)
            out.coef.middleRows(j * out.rows, out.rows).noalias() = M * coef.middleRows(j * rows, rows);
        return out;
    }

    Affine right(const Matrix& M) const {
        Affine out{rows, static_cast<int>(M.cols()), Matrix::Zero(rows * M.cols(), coef.cols())};
        for (int jp = 0; jp < out.cols; ++jp)
            for (int j = 0; j < cols; ++j) {
                const double v = M(j, jp);
                if (v != 0.0) out.coef.middleRows(jp * rows, rows) += v * coef.middleRows(j * rows, rows);
            }
        return out;
    }

    Affine operator+(const Affine& o) const {
        Affine out = *this;
        out.coef += o.coef;
        return out;
    }
    Affine operator-(const Affine& o) const {
        Affine out = *this;
        out.coef -= o.coef;
        return out;
    }

    Matrix evaluate(const Vector& theta) const {
        const Vector v = coef.col(0) + coef.rightCols(coef.cols() - 1) * theta;
        Matrix M(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) M(i, j) = v(i + j * rows);
        return M;
    }
};

// Block layout of the full tap vector theta.
struct Layout {
    int H, nx, nu, ny;
    int xw(int k) const { return (k - 1) * nx * nx; }
    int xn(int k) const { return H * nx * nx + (k - 1) * nx * ny; }
    int uw(int k) const { return H * (nx * nx + nx * ny) + (k - 1) * nu * nx; }
    int un(int k) const { return H * (nx * nx + nx * ny + nu * nx) + (k - 1) * nu * ny; }
    int tail_x() const { return H * (nx * nx + nx * ny + nu * nx + nu * ny); }
    int tail_u() const { return tail_x() + nx * nx; }
    int total() const { return tail_u() + nu * nx; }
};

struct Term {
    Matrix L;
    int offset;
    int rows, cols;
    Matrix R;
};

class ConstraintBuilder {
public:
    explicit ConstraintBuilder(int vars) : vars_(vars) {}

    // sum_t L_t X_t R_t = K
    void add(const std::vector<Term>& terms, const Matrix& K) {
        const int r = static_cast<int>(K.rows()), c = static_cast<int>(K.cols());
        for (int jp = 0; jp < c; ++jp)
            for (int ip = 0; ip < r; ++ip) {
                for (const Term& t : terms)
                    for (int j = 0; j < t.cols; ++j) {
                        const double rv = t.R(j, jp);
                        if (rv == 0.0) continue;
                        for (int i = 0; i < t.rows; ++i) {
                            const double lv = t.L(ip, i);
                            if (lv == 0.0) continue;
                            triplets_.emplace_back(row_, t.offset + i + j * t.rows, lv * rv);
                        }
                    }
                rhs_.push_back(K(ip, jp));
                ++row_;
            }
    }

    SlsConstraintSystem finish(int horizon) {
        SlsConstraintSystem s;
        s.E.resize(row_, vars_);
        s.E.setFromTriplets(triplets_.begin(), triplets_.end());
        s.f = Eigen::Map<Vector>(rhs_.data(), static_cast<Eigen::Index>(rhs_.size()));
        s.horizon = horizon;
        return s;
    }

private:
    int vars_;
    int row_ = 0;
    std::vector<Eigen::Triplet<double>> triplets_;
    std::vector<double> rhs_;
};

// Shape of the L1 objective: output rows of [Q_half; R_half] stacked, plus
// optional extra row groups for the robust constraint.
struct Entry {
    int group;  // 0 cost, 1 output-disturbance, 2 output-noise
    int row;
    double c;
    Vector g;
};

}  // namespace

AugmentedSystem build_tracking_augmentation(const LinearSystem<double>& sys, const Matrix& Q, const Matrix& R,
                                            double sigma_w, double delta, double sigma_eta) {
    const int n = sys.n(), m = sys.m(), p = sys.p();
    require_diagonal_psd(Q, n, "Q");
    require_diagonal_psd(R, m, "R");
    require(sigma_w >= 0, "build_tracking_augmentation: sigma_w must be nonnegative");
    require(delta >= 0, "build_tracking_augmentation: delta must be nonnegative");
    require(sigma_eta >= 0, "build_tracking_augmentation: sigma_eta must be nonnegative");
    const Matrix I = Matrix::Identity(n, n);
    AugmentedSystem a;
    a.A = Matrix::Zero(2 * n, 2 * n);
    a.A << sys.A, sys.A - I, Matrix::Zero(n, n), I;
    a.B = Matrix::Zero(2 * n, m);
    a.B.topRows(n) = sys.B;
    a.C = Matrix::Zero(p + n, 2 * n);
    a.C << sys.C, sys.C, Matrix::Zero(n, n), I;
    a.H = Matrix::Zero(2 * n, 2 * n);
    a.H << sigma_w * I, -delta * I, Matrix::Zero(n, n), delta * I;
    a.N = Matrix::Zero(p + n, p);
    a.N.topRows(p).setIdentity();
    a.Q_half = sqrt_rows(Q, 0, 2 * n);
    a.R_half = sqrt_rows(R, 0, m);
    a.C_out = Matrix::Zero(p, 2 * n);
    a.C_out.leftCols(n) = sys.C;
    a.hold_tail = true;
    a.sigma_w = sigma_w;
    a.delta = delta;
    a.sigma_eta = sigma_eta;
    return a;
}

AugmentedSystem plain_plant(const LinearSystem<double>& sys, const Matrix& Q, const Matrix& R) {
    require_diagonal_psd(Q, sys.n(), "Q");
    require_diagonal_psd(R, sys.m(), "R");
    AugmentedSystem a;
    a.A = sys.A;
    a.B = sys.B;
    a.C = sys.C;
    a.H = Matrix::Identity(sys.n(), sys.n());
    a.N = Matrix::Identity(sys.p(), sys.p());
    a.Q_half = sqrt_rows(Q, 0, sys.n());
    a.R_half = sqrt_rows(R, 0, sys.m());
    a.C_out = sys.C;
    a.hold_tail = false;
    return a;
}

SlsConstraintSystem assemble_sls_constraints(const AugmentedSystem& pl, int H) {
    require(H >= 1, "assemble_sls_constraints: horizon must be >= 1");
    const int nx = pl.nx(), nu = pl.nu(), ny = pl.ny();
    const Layout L{H, nx, nu, ny};
    const Matrix Ix = Matrix::Identity(nx, nx), Iu = Matrix::Identity(nu, nu);
    const Matrix Iy = Matrix::Identity(ny, ny);
    ConstraintBuilder cb(L.total());
    auto XW = [&](int k, const Matrix& Lm, const Matrix& Rm) { return Term{Lm, L.xw(k), nx, nx, Rm}; };
    auto XN = [&](int k, const Matrix& Lm, const Matrix& Rm) { return Term{Lm, L.xn(k), nx, ny, Rm}; };
    auto UW = [&](int k, const Matrix& Lm, const Matrix& Rm) { return Term{Lm, L.uw(k), nu, nx, Rm}; };
    auto UN = [&](int k, const Matrix& Lm, const Matrix& Rm) { return Term{Lm, L.un(k), nu, ny, Rm}; };
    auto TX = [&](const Matrix& Lm, const Matrix& Rm) { return Term{Lm, L.tail_x(), nx, nx, Rm}; };
    auto TU = [&](const Matrix& Lm, const Matrix& Rm) { return Term{Lm, L.tail_u(), nu, nx, Rm}; };

    cb.add({XW(1, Ix, Ix)}, Ix);
    cb.add({XN(1, Ix, Iy)}, Matrix::Zero(nx, ny));
    cb.add({UW(1, Iu, Ix)}, Matrix::Zero(nu, nx));
    for (int k = 1; k < H; ++k) {
        cb.add({XW(k + 1, Ix, Ix), XW(k, -pl.A, Ix), UW(k, -pl.B, Ix)}, Matrix::Zero(nx, nx));
        cb.add({XN(k + 1, Ix, Iy), XN(k, -pl.A, Iy), UN(k, -pl.B, Iy)}, Matrix::Zero(nx, ny));
        cb.add({XW(k + 1, Ix, Ix), XW(k, Ix, -pl.A), XN(k, Ix, -pl.C)}, Matrix::Zero(nx, nx));
        cb.add({UW(k + 1, Iu, Ix), UW(k, Iu, -pl.A), UN(k, Iu, -pl.C)}, Matrix::Zero(nu, nx));
    }
    cb.add({TX(Ix, Ix), XW(H, -pl.A, Ix), UW(H, -pl.B, Ix)}, Matrix::Zero(nx, nx));
    cb.add({XN(H, -pl.A, Iy), UN(H, -pl.B, Iy)}, Matrix::Zero(nx, ny));
    cb.add({TX(Ix, Ix), XW(H, Ix, -pl.A), XN(H, Ix, -pl.C)}, Matrix::Zero(nx, nx));
    cb.add({TU(Iu, Ix), UW(H, Iu, -pl.A), UN(H, Iu, -pl.C)}, Matrix::Zero(nu, nx));
    if (pl.hold_tail) {
        cb.add({TX(Ix, Ix), TX(-pl.A, Ix), TU(-pl.B, Ix)}, Matrix::Zero(nx, nx));
        cb.add({TX(Ix, Ix), TX(Ix, -pl.A)}, Matrix::Zero(nx, nx));
        cb.add({TU(Iu, Ix), TU(Iu, -pl.A)}, Matrix::Zero(nu, nx));
        if (pl.Q_half.rows() > 0) cb.add({TX(pl.Q_half, pl.H)}, Matrix::Zero(pl.Q_half.rows(), pl.nw()));
        if (pl.R_half.rows() > 0) cb.add({TU(pl.R_half, pl.H)}, Matrix::Zero(pl.R_half.rows(), pl.nw()));
        cb.add({TX(pl.C_out, pl.H)}, Matrix::Zero(pl.C_out.rows(), pl.nw()));
    } else {
        cb.add({TX(Ix, Ix)}, Matrix::Zero(nx, nx));
        cb.add({TU(Iu, Ix)}, Matrix::Zero(nu, nx));
    }
    return cb.finish(H);
}

SlsConstraintSystem assemble_sls_constraints(const LinearSystem<double>& sys, int horizon) {
    return assemble_sls_constraints(
        plain_plant(sys, Matrix::Identity(sys.n(), sys.n()), Matrix::Identity(sys.m(), sys.m())), horizon);
}

Vector vectorize(const SystemResponses& phi) {
    const int H = phi.horizon();
    const int nx = phi.xw.rows(), ny = phi.xn.cols(), nu = phi.uw.rows();
    const Layout L{H, nx, nu, ny};
    Vector theta(L.total());
    auto put = [&](int offset, const Matrix& M) {
        theta.segment(offset, M.size()) = Eigen::Map<const Vector>(M.data(), M.size());
    };
    for (int k = 1; k <= H; ++k) {
        put(L.xw(k), phi.xw[k]);
        put(L.xn(k), phi.xn[k]);
        put(L.uw(k), phi.uw[k]);
        put(L.un(k), phi.un[k]);
    }
    put(L.tail_x(), phi.tail_x);
    put(L.tail_u(), phi.tail_u);
    return theta;
}

SystemResponses unvectorize(const AugmentedSystem& pl, int H, const Vector& theta) {
    const int nx = pl.nx(), nu = pl.nu(), ny = pl.ny();
    const Layout L{H, nx, nu, ny};
    require(theta.size() == L.total(), "unvectorize: wrong length");
    auto get = [&](int offset, int r, int c) { return Matrix(Eigen::Map<const Matrix>(theta.data() + offset, r, c)); };
    SystemResponses phi{FirOperator<double>(nx, nx, H), FirOperator<double>(nx, ny, H),
                        FirOperator<double>(nu, nx, H), FirOperator<double>(nu, ny, H), Matrix(), Matrix()};
    for (int k = 1; k <= H; ++k) {
        phi.xw[k] = get(L.xw(k), nx, nx);
        phi.xn[k] = get(L.xn(k), nx, ny);
        phi.uw[k] = get(L.uw(k), nu, nx);
        phi.un[k] = get(L.un(k), nu, ny);
    }
    phi.tail_x = get(L.tail_x(), nx, nx);
    phi.tail_u = get(L.tail_u(), nu, nx);
    return phi;
}

double sls_residual(const AugmentedSystem& plant, const SystemResponses& phi) {
    const SlsConstraintSystem sys = assemble_sls_constraints(plant, phi.horizon());
    const Vector theta = vectorize(phi);
    require(theta.size() == sys.E.cols(), "sls_residual: responses do not match the plant");
    return (sys.E * theta - sys.f).cwiseAbs().maxCoeff();
}

namespace {

// Row sums of |L Phi(k) R| accumulated over taps 1..H (+ tail check).
Vector accumulate_rows(const FirOperator<double>& op, const Matrix& Lm, const Matrix& Rm) {
    Vector sums = Vector::Zero(Lm.rows());
    for (int k = 1; k <= op.horizon(); ++k) sums += (Lm * op[k] * Rm).cwiseAbs().rowwise().sum();
    return sums;
}

double tail_penalty(const AugmentedSystem& pl, const Matrix& tail, const Matrix& Lm) {
    if (!pl.hold_tail || Lm.rows() == 0 || tail.size() == 0) return 0.0;
    return (Lm * tail * pl.H).cwiseAbs().maxCoeff() > 1e-9 ? kInf : 0.0;
}

}  // namespace

double cost_l1(const AugmentedSystem& pl, const SystemResponses& phi, double noise_scale) {
    const Matrix eN = noise_scale * pl.N;
    Vector q = accumulate_rows(phi.xw, pl.Q_half, pl.H) + accumulate_rows(phi.xn, pl.Q_half, eN);
    Vector r = accumulate_rows(phi.uw, pl.R_half, pl.H) + accumulate_rows(phi.un, pl.R_half, eN);
    double best = 0.0;
    if (q.size() > 0) best = std::max(best, q.maxCoeff());
    if (r.size() > 0) best = std::max(best, r.maxCoeff());
    return best + tail_penalty(pl, phi.tail_x, pl.Q_half) + tail_penalty(pl, phi.tail_u, pl.R_half);
}

double output_disturbance_l1(const AugmentedSystem& pl, const SystemResponses& phi) {
    return accumulate_rows(phi.xw, pl.C_out, pl.H).maxCoeff() + tail_penalty(pl, phi.tail_x, pl.C_out);
}

double output_noise_l1(const AugmentedSystem& pl, const SystemResponses& phi) {
    return accumulate_rows(phi.xn, pl.C_out, pl.N).maxCoeff();
}

double noise_cost_l1(const AugmentedSystem& pl, const SystemResponses& phi) {
    Vector q = accumulate_rows(phi.xn, pl.Q_half, pl.N);
    Vector r = accumulate_rows(phi.un, pl.R_half, pl.N);
    double best = 0.0;
    if (q.size() > 0) best = std::max(best, q.maxCoeff());
    if (r.size() > 0) best = std::max(best, r.maxCoeff());
    return best;
}

double r_max_of_responses(const SynthesizedController& ctrl, double r_max_ref) {
    return r_max_ref + output_disturbance_l1(ctrl.plant, ctrl.phi);
}

namespace {

struct RobustSpec {
    double eps_h;
    double budget;  // r - r_max_ref
};

SynthesizedController synthesize(const AugmentedSystem& pl, int H, double eps, std::optional<RobustSpec> robust,
                                 const LpOptions& options) {
    require(H >= 1, "synthesis: horizon must be >= 1");
    require(eps >= 0, "synthesis: noise scale must be nonnegative");
    const int nx = pl.nx(), nu = pl.nu(), ny = pl.ny();
    const int P = H * nu * ny;  // free parameters: Phi_un(1..H)

    // Everything else follows from Phi_un through the recursions that define it.
    std::vector<Affine> un(H + 1), uw(H + 1), xw(H + 1), xn(H + 1);
    for (int k = 1; k <= H; ++k) un[k] = Affine::parameter(nu, ny, (k - 1) * nu * ny, P);
    uw[1] = Affine::constant(Matrix::Zero(nu, nx), P);
    xw[1] = Affine::constant(Matrix::Identity(nx, nx), P);
    xn[1] = Affine::constant(Matrix::Zero(nx, ny), P);
    for (int k = 1; k < H; ++k) {
        uw[k + 1] = uw[k].right(pl.A) + un[k].right(pl.C);
        xw[k + 1] = xw[k].left(pl.A) + uw[k].left(pl.B);
        xn[k + 1] = xn[k].left(pl.A) + un[k].left(pl.B);
    }
    const Affine tail_u = uw[H].right(pl.A) + un[H].right(pl.C);
    const Affine tail_x = xw[H].left(pl.A) + uw[H].left(pl.B);

    std::vector<const Affine*> eqs;
    std::vector<Affine> storage;
    storage.reserve(H + 10);
    for (int k = 1; k < H; ++k) storage.push_back(xw[k + 1] - xw[k].right(pl.A) - xn[k].right(pl.C));
    storage.push_back(tail_x - xw[H].right(pl.A) - xn[H].right(pl.C));
    storage.push_back(xn[H].left(pl.A) + un[H].left(pl.B));
    if (pl.hold_tail) {
        storage.push_back(tail_x - tail_x.left(pl.A) - tail_u.left(pl.B));
        storage.push_back(tail_x - tail_x.right(pl.A));
        storage.push_back(tail_u - tail_u.right(pl.A));
        if (pl.Q_half.rows() > 0) storage.push_back(tail_x.left(pl.Q_half).right(pl.H));
        if (pl.R_half.rows() > 0) storage.push_back(tail_u.left(pl.R_half).right(pl.H));
        storage.push_back(tail_x.left(pl.C_out).right(pl.H));
    } else {
        storage.push_back(tail_x);
        storage.push_back(tail_u);
    }

    // Equality system E theta = f with rows scaled to unit max coefficient.
    std::vector<Vector> erows;
    std::vector<double> frows;
    for (const Affine& a : storage)
        for (int r = 0; r < a.coef.rows(); ++r) {
            const Vector g = a.coef.row(r).tail(P).transpose();
            const double c = a.coef(r, 0);
            const double scale = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
            if (scale <= 1e-13) {
                if (std::abs(c) > 1e-9)
                    throw SynthesisError("synthesis: achievability constraints are inconsistent at horizon " +
                                         std::to_string(H) + " (increase the horizon)");
                continue;
            }
            erows.push_back(g / scale);
            frows.push_back(-c / scale);
        }
    Vector theta0 = Vector::Zero(P);
    Matrix null_basis = Matrix::Identity(P, P);
    if (!erows.empty()) {
        Matrix Et(P, static_cast<int>(erows.size()));
        Vector f(static_cast<int>(frows.size()));
        for (std::size_t i = 0; i < erows.size(); ++i) {
            Et.col(i) = erows[i];
            f(i) = frows[i];
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(Et);
        qr.setThreshold(1e-10);
        const int rank = static_cast<int>(qr.rank());
        const Matrix Qm = qr.householderQ();
        const Vector pf = qr.colsPermutation().transpose() * f;
        const Matrix R11 = qr.matrixQR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
        const Vector y1 = R11.transpose().triangularView<Eigen::Lower>().solve(pf.head(rank));
        theta0 = Qm.leftCols(rank) * y1;
        null_basis = Qm.rightCols(P - rank);
        const double consistency = (Et.transpose() * theta0 - f).cwiseAbs().maxCoeff();
        if (consistency > 1e-8)
            throw SynthesisError("synthesis: no FIR responses of horizon " + std::to_string(H) +
                                 " satisfy the achievability constraints (residual " + std::to_string(consistency) +
                                 "); increase the horizon");
    }
    const int d = static_cast<int>(null_basis.cols());

    // Objective and robust-constraint entries as affine functions of z.
    const int nq = static_cast<int>(pl.Q_half.rows()), nr = static_cast<int>(pl.R_half.rows());
    const int no = static_cast<int>(pl.C_out.rows());
    std::vector<Entry> entries;
    Vector constant_cost = Vector::Zero(nq + nr);
    Vector constant_out = Vector::Zero(no), constant_noise = Vector::Zero(no);
    auto collect = [&](const Affine& a, int group, int row_offset) {
        for (int j = 0; j < a.cols; ++j)
            for (int i = 0; i < a.rows; ++i) {
                const auto row = a.coef.row(i + j * a.rows);
                const Vector gth = row.tail(P).transpose();
                const double c = row(0) + gth.dot(theta0);
                Vector g = null_basis.transpose() * gth;
                const double gscale = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
                if (gscale <= 1e-11) {
                    const double v = std::abs(c) > 1e-14 ? std::abs(c) : 0.0;
                    if (group == 0) constant_cost(row_offset + i) += v;
                    if (group == 1) constant_out(i) += v;
                    if (group == 2) constant_noise(i) += v;
                    continue;
                }
                entries.push_back(Entry{group, row_offset + i, c, std::move(g)});
            }
    };
    const Matrix eN = eps * pl.N;
    for (int k = 1; k <= H; ++k) {
        if (nq > 0) {
            collect(xw[k].left(pl.Q_half).right(pl.H), 0, 0);
            if (eps > 0) collect(xn[k].left(pl.Q_half).right(eN), 0, 0);
        }
        if (nr > 0) {
            collect(uw[k].left(pl.R_half).right(pl.H), 0, nq);
            if (eps > 0) collect(un[k].left(pl.R_half).right(eN), 0, nq);
        }
        if (robust) {
            collect(xw[k].left(pl.C_out).right(pl.H), 1, 0);
            collect(xn[k].left(pl.C_out).right(pl.N), 2, 0);
        }
    }

    // LP variables: z (free) | p_e | q_e | tau | (a, b).
    const int E = static_cast<int>(entries.size());
    const int extra = robust ? 2 : 0;
    const int nvar = d + 2 * E + 1 + extra;
    const int tau = d + 2 * E;
    LpProblem lp(nvar);
    for (int j = 0; j < d; ++j) lp.lower(j) = -kInf;
    lp.c(tau) = 1.0;
    lp.A_eq = Matrix::Zero(E, nvar);
    lp.b_eq = Vector::Zero(E);
    for (int e = 0; e < E; ++e) {
        lp.A_eq.row(e).head(d) = entries[e].g.transpose();
        lp.A_eq(e, d + e) = -1.0;
        lp.A_eq(e, d + E + e) = 1.0;
        lp.b_eq(e) = -entries[e].c;
    }
    const int n_ineq = (nq + nr) + (robust ? 2 * no + 1 : 0);
    lp.A_ineq = Matrix::Zero(n_ineq, nvar);
    lp.b_ineq = Vector::Zero(n_ineq);
    for (int r = 0; r < nq + nr; ++r) {
        lp.A_ineq(r, tau) = -1.0;
        lp.b_ineq(r) = -constant_cost(r);
    }
    if (robust) {
        const int a_var = tau + 1, b_var = tau + 2;
        for (int i = 0; i < no; ++i) {
            lp.A_ineq(nq + nr + i, a_var) = -1.0;
            lp.b_ineq(nq + nr + i) = -constant_out(i);
            lp.A_ineq(nq + nr + no + i, b_var) = -1.0;
            lp.b_ineq(nq + nr + no + i) = -constant_noise(i);
        }
        const int last = nq + nr + 2 * no;
        lp.A_ineq(last, a_var) = 1.0;
        lp.A_ineq(last, b_var) = robust->eps_h;
        lp.b_ineq(last) = robust->budget;
    }
    for (int e = 0; e < E; ++e) {
        const Entry& en = entries[e];
        const int row = en.group == 0 ? en.row : (en.group == 1 ? nq + nr + en.row : nq + nr + no + en.row);
        lp.A_ineq(row, d + e) = 1.0;
        lp.A_ineq(row, d + E + e) = 1.0;
    }

    const LpResult res = solve_lp(lp, options);
    if (res.status == LpStatus::Infeasible) {
        if (robust) {
            std::ostringstream os;
            os << "robust synthesis infeasible: the output constraint cannot hold with eps_h = " << robust->eps_h
               << " and radius budget r - r_max_ref = " << robust->budget;
            throw SynthesisError(os.str());
        }
        throw SynthesisError("synthesis LP infeasible at horizon " + std::to_string(H) + "; increase the horizon");
    }
    if (res.status == LpStatus::Unbounded) throw SynthesisError("synthesis LP unbounded: the model is ill-posed");
    if (res.status != LpStatus::Optimal) throw NumericalError("synthesis LP failed: " + res.diagnostics);

    const Vector theta = theta0 + null_basis * res.x.head(d);
    SynthesizedController out;
    out.plant = pl;
    out.phi = SystemResponses{FirOperator<double>(nx, nx, H), FirOperator<double>(nx, ny, H),
                              FirOperator<double>(nu, nx, H), FirOperator<double>(nu, ny, H), Matrix(), Matrix()};
    for (int k = 1; k <= H; ++k) {
        out.phi.xw[k] = xw[k].evaluate(theta);
        out.phi.xn[k] = xn[k].evaluate(theta);
        out.phi.uw[k] = uw[k].evaluate(theta);
        out.phi.un[k] = un[k].evaluate(theta);
    }
    out.phi.tail_x = tail_x.evaluate(theta);
    out.phi.tail_u = tail_u.evaluate(theta);
    out.objective = res.objective;
    out.noise_scale = eps;
    out.duality_gap = res.duality_gap;
    out.residual = sls_residual(pl, out.phi);
    out.l1_objective = cost_l1(pl, out.phi, eps);
    out.lp_rows = static_cast<int>(lp.A_eq.rows() + lp.A_ineq.rows());
    out.lp_cols = nvar;
    out.lp_iterations = res.iterations;
    return out;
}

}  // namespace

SynthesizedController sls_synthesize(const AugmentedSystem& plant, int horizon, double noise_scale,
                                     const LpOptions& options) {
    return synthesize(plant, horizon, noise_scale, std::nullopt, options);
}

SynthesizedController robust_sls_synthesize(const AugmentedSystem& plant, int horizon, double eps_h, double r,
                                            double r_max_ref, const LpOptions& options) {
    require(r > r_max_ref, "robust_sls_synthesize: r must exceed r_max_ref");
    require(eps_h >= 0, "robust_sls_synthesize: eps_h must be nonnegative");
    return synthesize(plant, horizon, eps_h, RobustSpec{eps_h, r - r_max_ref}, options);
}

RealizedController::RealizedController(SystemResponses phi) : phi_(std::move(phi)) {
    require(phi_.horizon() >= 1, "RealizedController: empty responses");
    reset();
}

void RealizedController::reset() {
    ybar_.clear();
    v_.clear();
    v_prefix_.assign(1, Vector::Zero(phi_.xw.rows()));
}

Vector RealizedController::step(const Vector& ybar) {
    require(ybar.size() == measurement_dim(), "RealizedController: measurement has wrong dimension");
    const int H = phi_.horizon();
    const int t = static_cast<int>(v_.size());
    const int nx = phi_.xw.rows();
    // sum_{i <= upto} v_i, zero when upto < 0
    auto aged = [&](int upto) -> Vector {
        if (upto < 0) return Vector::Zero(nx);
        return v_prefix_[upto + 1];
    };

    Vector v = Vector::Zero(nx);
    for (int j = 1; j < H && j <= t; ++j) {
        v.noalias() += phi_.xn[j + 1] * ybar_[t - j];
        v.noalias() -= phi_.xw[j + 1] * v_[t - j];
    }
    if (phi_.tail_x.size() > 0) v.noalias() -= phi_.tail_x * aged(t - H);

    Vector u = Vector::Zero(input_dim());
    for (int k = 1; k <= H && k <= t; ++k) {
        u.noalias() += phi_.un[k] * ybar_[t - k];
        u.noalias() -= phi_.uw[k] * v_[t - k];
    }
    if (phi_.tail_u.size() > 0) u.noalias() -= phi_.tail_u * aged(t - H - 1);

    ybar_.push_back(ybar);
    v_.push_back(v);
    v_prefix_.push_back(v_prefix_.back() + v);
    return u;
}

RealizedController realize_controller(const SynthesizedController& ctrl) { return RealizedController(ctrl.phi); }

}  // namespace pbc
