#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mgsim/feasibility.hpp"
#include "mgsim/grid.hpp"
#include "mgsim/qp.hpp"

namespace mgsim {

/// Residual trading flexibility around a device-feasible plan. Node n is the
/// market, whose bounds are large but finite (a multiple of the total system
/// flexibility, so they can never bind at a feasible optimum).
struct ResidualBounds {
    Eigen::VectorXd lower_kw;  ///< size mg_count + 1
    Eigen::VectorXd upper_kw;
};

ResidualBounds residual_bounds(const std::vector<FlexInterval>& intervals, const TradePlan& plan);

/// Inputs of the grid-feasibility repair step.
struct RepairProblem {
    std::vector<int> mg_bus;       ///< bus index per microgrid
    int market_bus = -1;
    ResidualBounds residual;
    Eigen::VectorXd base_flows_kw; ///< line flows of the device-feasible plan
    Eigen::VectorXd line_limits_kw;
    const PtdfMatrix* ptdf = nullptr;
    double mg_weight = 1.0;        ///< objective weight on microgrid pair trades
    double market_weight = 10.0;   ///< objective weight discouraging market trades
};

RepairProblem build_repair_problem(const GridCase& grid, const PtdfMatrix& ptdf,
                                   const std::vector<FlexInterval>& intervals, const TradePlan& plan,
                                   const Eigen::VectorXd& base_flows_kw);

struct RepairResult {
    /// Additional trades among microgrids and the market (last row/column),
    /// exactly antisymmetric; entry (i, j) > 0 means node i imports from j.
    Eigen::MatrixXd delta_kw;
    Eigen::VectorXd flow_delta_kw;  ///< per-line flow change implied by PTDF
    bool hard_infeasible = false;   ///< fell back to the minimum-violation dispatch
    double objective = 0.0;
};

/// Solve the repair problem: minimal weighted additional trades restoring all
/// line limits while staying inside the residual flexibility. When the
/// overload cannot be relieved, falls back to minimizing the squared
/// overloads subject to the device bounds and flags the result.
RepairResult solve_repair(const RepairProblem& rp, const QpSettings& settings = {});

/// Fold the repair trades into a trade plan: microgrid pairs update the
/// peer-to-peer matrix, market pairs adjust the market exchange.
TradePlan apply_repair(const TradePlan& plan, const Eigen::MatrixXd& delta_kw);

}  // namespace mgsim
