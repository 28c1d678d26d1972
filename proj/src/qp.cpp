#include "mgsim/qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace mgsim {
namespace {

constexpr double kEqTol = 1e-12;      ///< lb == ub detection
constexpr double kRhoEqScale = 1e3;   ///< stiffer rho on equality rows
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;

double inf_norm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

Eigen::VectorXd clamp(const Eigen::VectorXd& v, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
    return v.cwiseMax(lb).cwiseMin(ub);
}

struct KktFactors {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool ok = false;
};

void factorize(KktFactors& f, const QpProblem& p, const Eigen::VectorXd& rho_vec, double sigma) {
    Eigen::SparseMatrix<double> k = p.P;
    Eigen::SparseMatrix<double> identity(p.variable_count(), p.variable_count());
    identity.setIdentity();
    k += sigma * identity;
    const Eigen::SparseMatrix<double> at_rho_a =
        p.A.transpose() * rho_vec.asDiagonal() * p.A;
    k += at_rho_a;
    f.ldlt.compute(k);
    f.ok = f.ldlt.info() == Eigen::Success;
}

/// Refine the ADMM iterate by solving the KKT system restricted to the
/// active constraints, with light regularization and iterative refinement.
bool polish(const QpProblem& p, const QpSettings& s, QpResult& r) {
    const int n = p.variable_count();
    const int m = p.constraint_count();

    std::vector<int> active;
    std::vector<double> active_rhs;
    const double y_tol = 1e-10;
    for (int i = 0; i < m; ++i) {
        const bool is_eq = p.ub(i) - p.lb(i) <= kEqTol;
        if (is_eq) {
            active.push_back(i);
            active_rhs.push_back(p.lb(i));
        } else if (r.y(i) < -y_tol) {
            active.push_back(i);
            active_rhs.push_back(p.lb(i));
        } else if (r.y(i) > y_tol) {
            active.push_back(i);
            active_rhs.push_back(p.ub(i));
        }
    }
    const int na = static_cast<int>(active.size());

    // Active rows of A as a sparse block.
    Eigen::SparseMatrix<double, Eigen::RowMajor> a_rows = p.A;
    std::vector<Eigen::Triplet<double>> act_trips;
    for (int a = 0; a < na; ++a)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a_rows, active[a]); it; ++it)
            act_trips.emplace_back(a, static_cast<int>(it.col()), it.value());
    Eigen::SparseMatrix<double> a_act(na, n);
    a_act.setFromTriplets(act_trips.begin(), act_trips.end());

    // KKT of the equality-constrained subproblem, regularized to stay
    // factorizable when the active rows are dependent.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(p.P.nonZeros() + 2 * a_act.nonZeros() + n + na);
    for (int c = 0; c < p.P.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p.P, c); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, s.polish_delta);
    for (int c = 0; c < a_act.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(a_act, c); it; ++it) {
            trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
            trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
        }
    for (int a = 0; a < na; ++a) trips.emplace_back(n + a, n + a, -s.polish_delta);
    Eigen::SparseMatrix<double> kkt(n + na, n + na);
    kkt.setFromTriplets(trips.begin(), trips.end());

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(kkt);
    if (lu.info() != Eigen::Success) return false;

    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -p.q;
    for (int a = 0; a < na; ++a) rhs(n + a) = active_rhs[a];

    Eigen::VectorXd sol = lu.solve(rhs);
    // A couple of refinement passes against the unregularized KKT.
    const Eigen::Map<const Eigen::VectorXd> b_act(active_rhs.data(), na);
    for (int pass = 0; pass < 3; ++pass) {
        Eigen::VectorXd resid(n + na);
        resid.head(n) = -p.q - (p.P * sol.head(n)) - a_act.transpose() * sol.tail(na);
        resid.tail(na) = b_act - a_act * sol.head(n);
        sol += lu.solve(resid);
    }

    Eigen::VectorXd x = sol.head(n);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < na; ++a) y(active[a]) = sol(n + a);

    const Eigen::VectorXd ax = p.A * x;
    const double feas_tol = 10.0 * (s.eps_abs + s.eps_rel);
    for (int i = 0; i < m; ++i)
        if (ax(i) < p.lb(i) - feas_tol || ax(i) > p.ub(i) + feas_tol) return false;

    const double dual_res = inf_norm(p.P * x + p.q + p.A.transpose() * y);
    const double prim_res = inf_norm(ax - clamp(ax, p.lb, p.ub));
    if (dual_res > std::max(r.dual_residual, s.eps_abs * 10.0) &&
        prim_res > std::max(r.primal_residual, s.eps_abs * 10.0))
        return false;

    r.x = std::move(x);
    r.y = std::move(y);
    r.z = clamp(ax, p.lb, p.ub);
    r.primal_residual = prim_res;
    r.dual_residual = dual_res;
    r.polished = true;
    return true;
}

}  // namespace

namespace {

struct Scaling {
    Eigen::VectorXd d;  ///< variable scaling
    Eigen::VectorXd e;  ///< constraint scaling
    double cost = 1.0;
};

/// Modified Ruiz equilibration of the KKT block [[P, A'], [A, 0]].
Scaling ruiz_equilibrate(QpProblem& p) {
    const int n = p.variable_count();
    const int m = p.constraint_count();
    Scaling sc;
    sc.d = Eigen::VectorXd::Ones(n);
    sc.e = Eigen::VectorXd::Ones(m);

    for (int pass = 0; pass < 10; ++pass) {
        Eigen::VectorXd col_norm = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(m);
        for (int c = 0; c < p.P.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(p.P, c); it; ++it)
                col_norm(it.col()) = std::max(col_norm(it.col()), std::abs(it.value()));
        for (int c = 0; c < p.A.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, c); it; ++it) {
                col_norm(it.col()) = std::max(col_norm(it.col()), std::abs(it.value()));
                row_norm(it.row()) = std::max(row_norm(it.row()), std::abs(it.value()));
            }
        Eigen::VectorXd dx(n), dz(m);
        for (int i = 0; i < n; ++i) dx(i) = col_norm(i) > 0 ? 1.0 / std::sqrt(col_norm(i)) : 1.0;
        for (int j = 0; j < m; ++j) dz(j) = row_norm(j) > 0 ? 1.0 / std::sqrt(row_norm(j)) : 1.0;

        p.P = dx.asDiagonal() * p.P * dx.asDiagonal();
        p.q = p.q.cwiseProduct(dx);
        p.A = dz.asDiagonal() * p.A * dx.asDiagonal();
        p.lb = p.lb.cwiseProduct(dz);
        p.ub = p.ub.cwiseProduct(dz);
        sc.d = sc.d.cwiseProduct(dx);
        sc.e = sc.e.cwiseProduct(dz);
    }

    // Cost normalization keeps the objective on the same footing as A.
    double p_norm = 0.0;
    for (int c = 0; c < p.P.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p.P, c); it; ++it)
            p_norm = std::max(p_norm, std::abs(it.value()));
    const double q_norm = p.q.size() ? p.q.cwiseAbs().maxCoeff() : 0.0;
    const double denom = std::max({p_norm, q_norm, 1e-12});
    sc.cost = 1.0 / denom;
    p.P *= sc.cost;
    p.q *= sc.cost;
    return sc;
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpSettings& s) {
    const int n = problem.variable_count();
    const int m = problem.constraint_count();
    if (problem.A.rows() != m || problem.A.cols() != n || problem.ub.size() != m ||
        problem.P.rows() != n || problem.P.cols() != n)
        throw Error("inconsistent QP dimensions");
    for (int i = 0; i < m; ++i)
        if (problem.lb(i) > problem.ub(i) + 1e-12) throw Error("QP row with lb > ub");

    QpProblem p = problem;  // scaled working copy
    const Scaling sc = ruiz_equilibrate(p);

    double rho = s.rho;
    auto rho_for_rows = [&](double base) {
        Eigen::VectorXd r(m);
        for (int i = 0; i < m; ++i)
            r(i) = (p.ub(i) - p.lb(i) <= kEqTol) ? base * kRhoEqScale : base;
        return r;
    };
    Eigen::VectorXd rho_vec = rho_for_rows(rho);

    KktFactors kkt;
    factorize(kkt, p, rho_vec, s.sigma);
    if (!kkt.ok) throw Error("QP KKT factorization failed");

    QpResult res;
    res.x = Eigen::VectorXd::Zero(n);
    res.z = clamp(Eigen::VectorXd::Zero(m), p.lb, p.ub);
    res.y = Eigen::VectorXd::Zero(m);

    int refactor_budget = 40;
    for (int it = 1; it <= s.max_iterations; ++it) {
        const Eigen::VectorXd rhs =
            s.sigma * res.x - p.q + p.A.transpose() * (rho_vec.cwiseProduct(res.z) - res.y);
        const Eigen::VectorXd x_tilde = kkt.ldlt.solve(rhs);
        const Eigen::VectorXd z_tilde = p.A * x_tilde;

        res.x = s.alpha * x_tilde + (1.0 - s.alpha) * res.x;
        const Eigen::VectorXd z_mix = s.alpha * z_tilde + (1.0 - s.alpha) * res.z;
        const Eigen::VectorXd z_new = clamp(z_mix + res.y.cwiseQuotient(rho_vec), p.lb, p.ub);
        res.y += rho_vec.cwiseProduct(z_mix - z_new);
        res.z = z_new;

        if (it % s.check_interval != 0 && it != s.max_iterations) continue;

        const Eigen::VectorXd ax = p.A * res.x;
        const Eigen::VectorXd px = p.P * res.x;
        const Eigen::VectorXd aty = p.A.transpose() * res.y;
        res.primal_residual = inf_norm(ax - res.z);
        res.dual_residual = inf_norm(px + p.q + aty);
        res.iterations = it;

        const double eps_prim = s.eps_abs + s.eps_rel * std::max(inf_norm(ax), inf_norm(res.z));
        const double eps_dual =
            s.eps_abs + s.eps_rel * std::max({inf_norm(px), inf_norm(aty), inf_norm(p.q)});
        if (res.primal_residual <= eps_prim && res.dual_residual <= eps_dual) {
            res.status = QpStatus::Solved;
            break;
        }

        if (s.adaptive_rho && refactor_budget > 0 && it % (s.check_interval * 8) == 0) {
            const double pr = res.primal_residual / std::max(eps_prim, 1e-30);
            const double dr = res.dual_residual / std::max(eps_dual, 1e-30);
            const double ratio = std::sqrt(pr / std::max(dr, 1e-30));
            if (ratio > 5.0 || ratio < 0.2) {
                rho = std::clamp(rho * ratio, kRhoMin, kRhoMax);
                rho_vec = rho_for_rows(rho);
                factorize(kkt, p, rho_vec, s.sigma);
                if (!kkt.ok) throw Error("QP KKT refactorization failed");
                --refactor_budget;
            }
        }
    }

    if (s.polish) polish(p, s, res);

    // Undo the equilibration and report residuals in original units.
    res.x = res.x.cwiseProduct(sc.d);
    res.y = res.y.cwiseProduct(sc.e) / sc.cost;
    const Eigen::VectorXd ax = problem.A * res.x;
    res.z = clamp(ax, problem.lb, problem.ub);
    res.primal_residual = inf_norm(ax - res.z);
    res.dual_residual =
        inf_norm(problem.P * res.x + problem.q + problem.A.transpose() * res.y);
    return res;
}

}  // namespace mgsim
