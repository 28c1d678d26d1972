#include <doctest.h>

#include <random>

#include "mgsim/qp.hpp"
#include "support/oracles.hpp"

using namespace mgsim;

namespace {

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& m) {
    return m.sparseView();
}

}  // namespace

TEST_CASE("qp: unconstrained minimum inside the box") {
    // min (x-1)^2 + (y+2)^2 with loose box rows
    QpProblem p;
    Eigen::MatrixXd P = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    p.P = sparse(P);
    p.q = Eigen::VectorXd(2);
    p.q << -2.0, 4.0;
    p.A = sparse(Eigen::MatrixXd::Identity(2, 2));
    p.lb = Eigen::VectorXd::Constant(2, -10.0);
    p.ub = Eigen::VectorXd::Constant(2, 10.0);

    const QpResult r = solve_qp(p);
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(r.x(1) == doctest::Approx(-2.0).epsilon(1e-7));
}

TEST_CASE("qp: active box bound") {
    // min x^2 subject to x >= 3
    QpProblem p;
    p.P = sparse(2.0 * Eigen::MatrixXd::Identity(1, 1));
    p.q = Eigen::VectorXd::Zero(1);
    p.A = sparse(Eigen::MatrixXd::Identity(1, 1));
    p.lb = Eigen::VectorXd::Constant(1, 3.0);
    p.ub = Eigen::VectorXd::Constant(1, 100.0);
    const QpResult r = solve_qp(p);
    CHECK(r.x(0) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("qp: equality row via lb == ub") {
    // min x^2 + y^2 s.t. x + y = 4 -> x = y = 2
    QpProblem p;
    p.P = sparse(2.0 * Eigen::MatrixXd::Identity(2, 2));
    p.q = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd A(1, 2);
    A << 1.0, 1.0;
    p.A = sparse(A);
    p.lb = Eigen::VectorXd::Constant(1, 4.0);
    p.ub = Eigen::VectorXd::Constant(1, 4.0);
    const QpResult r = solve_qp(p);
    CHECK(r.x(0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(r.x(1) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("qp: random strictly convex problems match the interior-point oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + static_cast<int>(uni(rng) * 5);
        const int m = n + 1 + static_cast<int>(uni(rng) * 4);

        Eigen::MatrixXd root(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) root(i, j) = gauss(rng);
        Eigen::MatrixXd P = root.transpose() * root + 0.5 * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd q(n);
        for (int i = 0; i < n; ++i) q(i) = gauss(rng);

        Eigen::MatrixXd A(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
        // bands centered on a known point so the instance is always feasible
        Eigen::VectorXd x0(n);
        for (int i = 0; i < n; ++i) x0(i) = gauss(rng);
        const Eigen::VectorXd center = A * x0;
        Eigen::VectorXd lb(m), ub(m);
        for (int i = 0; i < m; ++i) {
            lb(i) = center(i) - 0.1 - uni(rng) * 2.0;
            ub(i) = center(i) + 0.1 + uni(rng) * 3.0;
        }

        QpProblem p;
        p.P = sparse(P);
        p.q = q;
        p.A = sparse(A);
        p.lb = lb;
        p.ub = ub;
        const QpResult r = solve_qp(p);

        oracle::DenseQp dq;
        dq.P = P;
        dq.q = q;
        dq.G.resize(2 * m, n);
        dq.G << A, -A;
        dq.h.resize(2 * m);
        dq.h << ub, -lb;
        const oracle::IpResult ref = oracle::solve_dense_ip(dq);
        REQUIRE(ref.converged);

        CHECK(r.objective(p) == doctest::Approx(ref.objective).epsilon(1e-6));
        CHECK((p.A * r.x - p.ub).maxCoeff() < 1e-6);
        CHECK((p.lb - p.A * r.x).maxCoeff() < 1e-6);
    }
}

TEST_CASE("qp: semidefinite objective with equality coupling") {
    // min (x0 - 5)^2 with a free variable tied by x0 + x1 = 1, x1 in [-2, 2].
    QpProblem p;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, 2);
    P(0, 0) = 2.0;
    p.P = sparse(P);
    p.q = Eigen::VectorXd(2);
    p.q << -10.0, 0.0;
    Eigen::MatrixXd A(2, 2);
    A << 1.0, 1.0, 0.0, 1.0;
    p.A = sparse(A);
    p.lb = Eigen::VectorXd(2);
    p.ub = Eigen::VectorXd(2);
    p.lb << 1.0, -2.0;
    p.ub << 1.0, 2.0;
    const QpResult r = solve_qp(p);
    // best x0 = 3 (x1 = -2 at its bound)
    CHECK(r.x(0) == doctest::Approx(3.0).epsilon(1e-7));
    CHECK(r.x(1) == doctest::Approx(-2.0).epsilon(1e-7));
}
