#include "oracles.hpp"
#include "pbc/lp.hpp"

#include <doctest.h>

#include <functional>

using namespace pbc;

namespace {

// Minimum of c'x over the vertices of {A x <= b, lo <= x <= hi}, by brute force.
double vertex_minimum(const Vector& c, const Matrix& A, const Vector& b, double lo, double hi) {
    const int n = static_cast<int>(c.size());
    Matrix G(A.rows() + 2 * n, n);
    Vector h(A.rows() + 2 * n);
    G << A, Matrix::Identity(n, n), -Matrix::Identity(n, n);
    h << b, Vector::Constant(n, hi), Vector::Constant(n, -lo);
    const int rows = static_cast<int>(G.rows());
    double best = kInf;
    std::vector<int> pick(n);
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == n) {
            Matrix M(n, n);
            Vector r(n);
            for (int i = 0; i < n; ++i) {
                M.row(i) = G.row(pick[i]);
                r(i) = h(pick[i]);
            }
            Eigen::FullPivLU<Matrix> lu(M);
            if (lu.rank() < n) return;
            const Vector x = lu.solve(r);
            if (((G * x - h).array() <= 1e-9).all()) best = std::min(best, c.dot(x));
            return;
        }
        for (int i = start; i < rows; ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

}  // namespace

TEST_CASE("single bound") {
    LpProblem lp(1);
    lp.c << 1.0;
    lp.lower << -kInf;
    lp.A_ineq = Matrix::Constant(1, 1, -1.0);
    lp.b_ineq = Vector::Constant(1, -3.0);
    const LpResult r = solve_lp(lp);
    REQUIRE(r.status == LpStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(3.0));
    CHECK(r.objective == doctest::Approx(3.0));
}

TEST_CASE("infeasible pair has a Farkas certificate") {
    LpProblem lp(1);
    lp.lower << -kInf;
    lp.A_ineq.resize(2, 1);
    lp.A_ineq << 1.0, -1.0;
    lp.b_ineq.resize(2);
    lp.b_ineq << 0.0, -1.0;
    const LpResult r = solve_lp(lp);
    CHECK(r.status == LpStatus::Infeasible);
    REQUIRE(r.certificate.size() == 2);
    // y >= 0 with y'A = 0 and y'b < 0
    Vector y = r.certificate;
    if (y.sum() < 0) y = -y;
    CHECK((y.array() >= -1e-12).all());
    CHECK(std::abs((lp.A_ineq.transpose() * y)(0)) < 1e-9);
    CHECK(y.dot(lp.b_ineq) < 0.0);
}

TEST_CASE("unbounded problem returns a descent ray") {
    LpProblem lp(2);
    lp.c << -1.0, 0.0;
    lp.A_ineq = (Matrix(1, 2) << 0.0, 1.0).finished();
    lp.b_ineq = Vector::Ones(1);
    const LpResult r = solve_lp(lp);
    CHECK(r.status == LpStatus::Unbounded);
    REQUIRE(r.certificate.size() == 2);
    CHECK(lp.c.dot(r.certificate) < 0.0);
    CHECK((r.certificate.array() >= -1e-12).all());
}

TEST_CASE("equalities and free variables") {
    // min x0 + 2 x1 s.t. x0 + x1 = 1, x0 - x1 <= 0.5, x1 free, x0 >= 0
    LpProblem lp(2);
    lp.c << 1.0, 2.0;
    lp.lower(1) = -kInf;
    lp.A_eq = (Matrix(1, 2) << 1.0, 1.0).finished();
    lp.b_eq = Vector::Ones(1);
    lp.A_ineq = (Matrix(1, 2) << 1.0, -1.0).finished();
    lp.b_ineq = Vector::Constant(1, 0.5);
    const LpResult r = solve_lp(lp);
    REQUIRE(r.status == LpStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(0.75));
    CHECK(r.x(1) == doctest::Approx(0.25));
    CHECK(r.duality_gap <= 1e-8);
}

TEST_CASE("property: random polytopes agree with vertex enumeration") {
    oracle::Gen gen(2024);
    int solved = 0;
    for (int trial = 0; trial < 150; ++trial) {
        const int n = gen.integer(1, 4);
        const int m = gen.integer(1, 6);
        LpProblem lp(n);
        lp.c = gen.vector(n);
        lp.A_ineq = gen.matrix(m, n);
        lp.b_ineq = gen.vector(m).cwiseAbs() + Vector::Constant(m, 0.1);  // origin strictly feasible
        lp.lower = Vector::Constant(n, -2.0);
        lp.upper = Vector::Constant(n, 2.0);
        const LpResult r = solve_lp(lp);
        REQUIRE(r.status == LpStatus::Optimal);
        const double oracle_min = vertex_minimum(lp.c, lp.A_ineq, lp.b_ineq, -2.0, 2.0);
        CHECK(r.objective == doctest::Approx(oracle_min).epsilon(1e-8));
        CHECK(r.primal_residual <= 1e-9);
        CHECK(r.duality_gap <= 1e-8);
        ++solved;
    }
    CHECK(solved == 150);
}

TEST_CASE("property: degenerate problems terminate") {
    oracle::Gen gen(7);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = gen.integer(2, 5);
        LpProblem lp(n);
        lp.c = gen.vector(n);
        // many constraints through the origin make the origin a highly degenerate vertex
        const int m = 3 * n;
        lp.A_ineq = gen.matrix(m, n);
        lp.b_ineq = Vector::Zero(m);
        lp.upper = Vector::Constant(n, 1.0);
        const LpResult r = solve_lp(lp);
        REQUIRE(r.status == LpStatus::Optimal);
        const double oracle_min = vertex_minimum(lp.c, lp.A_ineq, lp.b_ineq, 0.0, 1.0);
        CHECK(r.objective == doctest::Approx(oracle_min).epsilon(1e-8));
    }
}

TEST_CASE("an inactive row with a huge right-hand side does not disturb the rest") {
    oracle::Gen gen(99);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3, m = 5;
        LpProblem lp(n);
        lp.c = gen.vector(n);
        lp.A_ineq = gen.matrix(m, n);
        lp.b_ineq = gen.vector(m).cwiseAbs() + Vector::Constant(m, 0.1);
        lp.lower = Vector::Constant(n, -2.0);
        lp.upper = Vector::Constant(n, 2.0);
        const LpResult base = solve_lp(lp);
        REQUIRE(base.status == LpStatus::Optimal);
        LpProblem big = lp;
        big.A_ineq.conservativeResize(m + 1, n);
        big.b_ineq.conservativeResize(m + 1);
        big.A_ineq.row(m) = gen.vector(n).transpose();
        big.b_ineq(m) = 1e8;
        const LpResult r = solve_lp(big);
        REQUIRE(r.status == LpStatus::Optimal);
        CHECK(r.objective == doctest::Approx(base.objective).epsilon(1e-9));
        CHECK(r.primal_residual <= 1e-9);
        CHECK(std::abs(r.dual_ineq(m)) <= 1e-12);
    }
}

TEST_CASE("malformed problems are rejected") {
    LpProblem lp(2);
    lp.A_ineq = Matrix::Ones(1, 3);
    lp.b_ineq = Vector::Ones(1);
    CHECK_THROWS_AS(solve_lp(lp), InputError);
}
