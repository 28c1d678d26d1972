#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mgsim/devices.hpp"

namespace mgsim {

/// Partition of the microgrids against their ideal market exchange:
/// deficit (X_i <= l_i), surplus (X_i >= u_i) and the feasible rest.
struct Classification {
    std::vector<int> deficit;   ///< microgrid indices with X_i <= l_i
    std::vector<int> surplus;   ///< microgrid indices with X_i >= u_i
    std::vector<int> flexible;  ///< the remaining microgrids
    Eigen::VectorXd deficit_kw;  ///< per microgrid, l_i - X_i for deficit members, else 0
    Eigen::VectorXd surplus_kw;  ///< per microgrid, X_i - u_i for surplus members, else 0
    double total_deficit_kw = 0.0;
    double total_surplus_kw = 0.0;

    bool all_feasible() const { return total_deficit_kw <= 0.0 && total_surplus_kw <= 0.0; }
};

Classification classify(const Eigen::VectorXd& targets_kw, const std::vector<FlexInterval>& intervals);

/// Arc cost tiers; must keep direct < flexible < market.
struct FlowTiers {
    double direct = 1.0;    ///< surplus -> deficit trades
    double flexible = 10.0; ///< arcs incident to feasible microgrids
    double market = 100.0;  ///< arcs incident to the market
};

struct FlowArc {
    int from = 0;
    int to = 0;
    double capacity = 0.0;
    double cost = 0.0;
};

/// Min-cost flow instance over microgrid trade nodes, the market and a
/// super-source/sink closing the imbalance. Flexible microgrids and the
/// market are split into absorb/supply sides so their capacities never form
/// a free source-to-sink bypass.
struct FlowGraph {
    int mg_count = 0;
    int node_count = 0;
    std::vector<FlowArc> arcs;
    double required_flow = 0.0;
    int market_in = -1;   ///< absorbing side of the market
    int market_out = -1;  ///< supplying side of the market
    int source = -1;
    int sink = -1;
    std::vector<int> node_mg;  ///< per node: owning microgrid index, or -1
};

/// Build the trading graph: surplus microgrids must ship their full surplus,
/// deficit microgrids must receive their full deficit, feasible microgrids
/// and the market close the remaining imbalance at higher tiers.
FlowGraph build_flow_graph(const Classification& c, const std::vector<FlexInterval>& intervals,
                           const Eigen::VectorXd& targets_kw, const FlowTiers& tiers = {});

/// Successive-shortest-paths solve; returns the flow on each arc of the
/// graph, in arc order. Deterministic for a fixed graph.
Eigen::VectorXd solve_min_cost_flow(const FlowGraph& g);

/// Total cost of a given arc-flow vector.
double flow_cost(const FlowGraph& g, const Eigen::VectorXd& arc_flows);

/// Market exchanges and pairwise peer-to-peer trades for one slice.
/// p2p_kw(i, j) > 0 means microgrid i imports from j; the matrix is exactly
/// antisymmetric. Device power is implied: x_d = market + sum_j p2p.
struct TradePlan {
    Eigen::VectorXd market_kw;
    Eigen::MatrixXd p2p_kw;

    Eigen::VectorXd device_kw() const { return market_kw + p2p_kw.rowwise().sum(); }
    Eigen::VectorXd p2p_net_kw() const { return p2p_kw.rowwise().sum(); }

    static TradePlan identity(const Eigen::VectorXd& targets_kw) {
        TradePlan plan;
        plan.market_kw = targets_kw;
        plan.p2p_kw = Eigen::MatrixXd::Zero(targets_kw.size(), targets_kw.size());
        return plan;
    }
};

/// Translate arc flows back into peer-to-peer trades and market adjustments,
/// starting from the ideal plan x^M_i = X_i.
TradePlan trades_from_flow(const Eigen::VectorXd& arc_flows, const FlowGraph& g,
                           const Eigen::VectorXd& targets_kw);

/// Step 1 of the control loop: classify and, when some microgrid is device
/// infeasible, resolve it through the tiered min-cost flow.
TradePlan resolve_device_feasibility(const Eigen::VectorXd& targets_kw,
                                     const std::vector<FlexInterval>& intervals,
                                     const FlowTiers& tiers = {});

}  // namespace mgsim
