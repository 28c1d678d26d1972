#include "mgsim/repair.hpp"

#include <cmath>
#include <limits>

namespace mgsim {
namespace {

struct PairIndex {
    int node_count = 0;  ///< microgrids + market

    int pair_count() const { return node_count * (node_count - 1) / 2; }
    int index(int a, int b) const {  // requires a < b
        return a * node_count - a * (a + 1) / 2 + (b - a - 1);
    }
};

/// Line-row coefficient: flow change on `line` per unit of node `a` importing
/// from node `b` (injection at b, withdrawal at a).
double trade_shift(const PtdfMatrix& ptdf, int line, int bus_a, int bus_b) {
    return ptdf.shift_factor(line, bus_b) - ptdf.shift_factor(line, bus_a);
}

}  // namespace

ResidualBounds residual_bounds(const std::vector<FlexInterval>& intervals, const TradePlan& plan) {
    const int n = static_cast<int>(intervals.size());
    const Eigen::VectorXd device = plan.device_kw();
    if (device.size() != n) throw Error("plan/interval size mismatch");

    ResidualBounds rb;
    rb.lower_kw.resize(n + 1);
    rb.upper_kw.resize(n + 1);
    double span = 0.0;
    for (int i = 0; i < n; ++i) {
        rb.lower_kw(i) = intervals[i].lower_kw - device(i);
        rb.upper_kw(i) = intervals[i].upper_kw - device(i);
        span += std::abs(intervals[i].upper_kw) + std::abs(intervals[i].lower_kw);
    }
    const double big = 10.0 * span + 1.0;
    rb.lower_kw(n) = -big;
    rb.upper_kw(n) = big;
    return rb;
}

RepairProblem build_repair_problem(const GridCase& grid, const PtdfMatrix& ptdf,
                                   const std::vector<FlexInterval>& intervals, const TradePlan& plan,
                                   const Eigen::VectorXd& base_flows_kw) {
    RepairProblem rp;
    rp.mg_bus = grid.microgrid_buses;
    rp.market_bus = grid.market_bus;
    rp.residual = residual_bounds(intervals, plan);
    rp.base_flows_kw = base_flows_kw;
    rp.line_limits_kw.resize(grid.line_count());
    for (int l = 0; l < grid.line_count(); ++l) rp.line_limits_kw(l) = grid.lines[l].thermal_limit_kw;
    rp.ptdf = &ptdf;
    return rp;
}

RepairResult solve_repair(const RepairProblem& rp, const QpSettings& settings) {
    if (!rp.ptdf) throw Error("repair problem has no PTDF");
    const int n = static_cast<int>(rp.mg_bus.size());
    const PairIndex pairs{n + 1};
    const int nv = pairs.pair_count();
    const int lines = static_cast<int>(rp.base_flows_kw.size());

    auto node_bus = [&](int node) { return node < n ? rp.mg_bus[node] : rp.market_bus; };
    auto pair_weight = [&](int a, int b) {
        return (a < n && b < n) ? rp.mg_weight : rp.market_weight;
    };

    // Objective: sum over ordered pairs of (a_ij dx_ij)^2, i.e. twice the
    // upper-triangular sum; the constant factor does not move the argmin.
    std::vector<Eigen::Triplet<double>> p_trips;
    for (int a = 0; a <= n; ++a)
        for (int b = a + 1; b <= n; ++b) {
            const int v = pairs.index(a, b);
            const double w = pair_weight(a, b);
            p_trips.emplace_back(v, v, 2.0 * w * w);
        }

    // Rows: per-node residual bounds, then per-line limits on base + delta.
    std::vector<Eigen::Triplet<double>> a_trips;
    const int rows = (n + 1) + lines;
    Eigen::VectorXd lb(rows), ub(rows);
    for (int node = 0; node <= n; ++node) {
        for (int other = 0; other <= n; ++other) {
            if (other == node) continue;
            const int a = std::min(node, other);
            const int b = std::max(node, other);
            const double sign = node == a ? 1.0 : -1.0;
            a_trips.emplace_back(node, pairs.index(a, b), sign);
        }
        lb(node) = rp.residual.lower_kw(node);
        ub(node) = rp.residual.upper_kw(node);
    }
    for (int l = 0; l < lines; ++l) {
        const int row = n + 1 + l;
        for (int a = 0; a <= n; ++a)
            for (int b = a + 1; b <= n; ++b) {
                const double c = trade_shift(*rp.ptdf, l, node_bus(a), node_bus(b));
                if (c != 0.0) a_trips.emplace_back(row, pairs.index(a, b), c);
            }
        lb(row) = -rp.line_limits_kw(l) - rp.base_flows_kw(l);
        ub(row) = rp.line_limits_kw(l) - rp.base_flows_kw(l);
    }

    QpProblem qp;
    qp.P.resize(nv, nv);
    qp.P.setFromTriplets(p_trips.begin(), p_trips.end());
    qp.q = Eigen::VectorXd::Zero(nv);
    qp.A.resize(rows, nv);
    qp.A.setFromTriplets(a_trips.begin(), a_trips.end());
    qp.lb = lb;
    qp.ub = ub;

    QpResult sol = solve_qp(qp, settings);

    auto assemble = [&](const Eigen::VectorXd& v) {
        RepairResult out;
        out.delta_kw = Eigen::MatrixXd::Zero(n + 1, n + 1);
        for (int a = 0; a <= n; ++a)
            for (int b = a + 1; b <= n; ++b) {
                const double x = v(pairs.index(a, b));
                out.delta_kw(a, b) = x;
                out.delta_kw(b, a) = -x;
            }
        out.flow_delta_kw = Eigen::VectorXd::Zero(lines);
        for (int l = 0; l < lines; ++l)
            for (int a = 0; a <= n; ++a)
                for (int b = a + 1; b <= n; ++b)
                    out.flow_delta_kw(l) +=
                        trade_shift(*rp.ptdf, l, node_bus(a), node_bus(b)) * v(pairs.index(a, b));
        for (int a = 0; a <= n; ++a)
            for (int b = a + 1; b <= n; ++b) {
                const double w = pair_weight(a, b);
                out.objective += 2.0 * w * w * v(pairs.index(a, b)) * v(pairs.index(a, b));
            }
        return out;
    };

    // Accept the solution if every line limit is actually met.
    bool feasible = sol.status == QpStatus::Solved;
    if (feasible) {
        const Eigen::VectorXd post =
            rp.base_flows_kw + (qp.A * sol.x).segment(n + 1, lines);
        for (int l = 0; l < lines && feasible; ++l)
            if (std::abs(post(l)) > rp.line_limits_kw(l) + 1e-6) feasible = false;
    }
    if (feasible) return assemble(sol.x);

    // Minimum-violation fallback: per-line overload slacks, device bounds kept
    // hard. The trade term keeps the fallback deterministic and small.
    const int nv2 = nv + lines;
    std::vector<Eigen::Triplet<double>> p2_trips;
    for (int a = 0; a <= n; ++a)
        for (int b = a + 1; b <= n; ++b) {
            const int v = pairs.index(a, b);
            const double w = pair_weight(a, b);
            p2_trips.emplace_back(v, v, 2.0 * w * w * 1e-6);
        }
    for (int l = 0; l < lines; ++l) p2_trips.emplace_back(nv + l, nv + l, 2.0);

    const int rows2 = (n + 1) + 2 * lines + lines;
    std::vector<Eigen::Triplet<double>> a2_trips;
    Eigen::VectorXd lb2(rows2), ub2(rows2);
    const double inf = std::numeric_limits<double>::infinity();
    for (int node = 0; node <= n; ++node) {
        for (int other = 0; other <= n; ++other) {
            if (other == node) continue;
            const int a = std::min(node, other);
            const int b = std::max(node, other);
            a2_trips.emplace_back(node, pairs.index(a, b), node == a ? 1.0 : -1.0);
        }
        lb2(node) = rp.residual.lower_kw(node);
        ub2(node) = rp.residual.upper_kw(node);
    }
    for (int l = 0; l < lines; ++l) {
        for (int a = 0; a <= n; ++a)
            for (int b = a + 1; b <= n; ++b) {
                const double c = trade_shift(*rp.ptdf, l, node_bus(a), node_bus(b));
                if (c == 0.0) continue;
                a2_trips.emplace_back(n + 1 + 2 * l, pairs.index(a, b), c);
                a2_trips.emplace_back(n + 1 + 2 * l + 1, pairs.index(a, b), c);
            }
        // flow - slack <= limit  and  flow + slack >= -limit
        a2_trips.emplace_back(n + 1 + 2 * l, nv + l, -1.0);
        lb2(n + 1 + 2 * l) = -inf;
        ub2(n + 1 + 2 * l) = rp.line_limits_kw(l) - rp.base_flows_kw(l);
        a2_trips.emplace_back(n + 1 + 2 * l + 1, nv + l, 1.0);
        lb2(n + 1 + 2 * l + 1) = -rp.line_limits_kw(l) - rp.base_flows_kw(l);
        ub2(n + 1 + 2 * l + 1) = inf;
        // slack >= 0
        a2_trips.emplace_back(n + 1 + 2 * lines + l, nv + l, 1.0);
        lb2(n + 1 + 2 * lines + l) = 0.0;
        ub2(n + 1 + 2 * lines + l) = inf;
    }

    QpProblem qp2;
    qp2.P.resize(nv2, nv2);
    qp2.P.setFromTriplets(p2_trips.begin(), p2_trips.end());
    qp2.q = Eigen::VectorXd::Zero(nv2);
    qp2.A.resize(rows2, nv2);
    qp2.A.setFromTriplets(a2_trips.begin(), a2_trips.end());
    qp2.lb = lb2;
    qp2.ub = ub2;

    QpResult fallback = solve_qp(qp2, settings);
    RepairResult out = assemble(fallback.x.head(nv));
    out.hard_infeasible = true;
    return out;
}

TradePlan apply_repair(const TradePlan& plan, const Eigen::MatrixXd& delta_kw) {
    const int n = static_cast<int>(plan.market_kw.size());
    if (delta_kw.rows() != n + 1 || delta_kw.cols() != n + 1)
        throw Error("repair delta has wrong dimensions");

    TradePlan out = plan;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (i != j) out.p2p_kw(i, j) += delta_kw(i, j);
        out.market_kw(i) += delta_kw(i, n);
    }
    return out;
}

}  // namespace mgsim
