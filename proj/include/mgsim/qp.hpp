#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mgsim/common.hpp"

namespace mgsim {

/// Convex quadratic program in box-row form:
///   minimize 0.5 x'Px + q'x   subject to  lb <= Ax <= ub
/// with P positive semidefinite. Equality rows are expressed as lb == ub.
struct QpProblem {
    Eigen::SparseMatrix<double> P;
    Eigen::VectorXd q;
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd lb;
    Eigen::VectorXd ub;

    int variable_count() const { return static_cast<int>(q.size()); }
    int constraint_count() const { return static_cast<int>(lb.size()); }
};

struct QpSettings {
    int max_iterations = 50000;
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    bool adaptive_rho = true;
    bool polish = true;
    double polish_delta = 1e-9;
    int check_interval = 25;
};

enum class QpStatus {
    Solved,
    MaxIterations,
};

struct QpResult {
    QpStatus status = QpStatus::MaxIterations;
    Eigen::VectorXd x;
    Eigen::VectorXd z;  ///< projected constraint values Ax
    Eigen::VectorXd y;  ///< constraint multipliers
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    bool polished = false;

    double objective(const QpProblem& p) const {
        return 0.5 * x.dot(p.P * x) + p.q.dot(x);
    }
};

/// Operator-splitting (ADMM) solve with an equality-KKT polish step on the
/// active set. Deterministic for fixed inputs and settings.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {});

}  // namespace mgsim
