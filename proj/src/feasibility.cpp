#include "mgsim/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace mgsim {

Classification classify(const Eigen::VectorXd& targets_kw, const std::vector<FlexInterval>& intervals) {
    const int n = static_cast<int>(intervals.size());
    if (targets_kw.size() != n) throw Error("targets/intervals size mismatch");

    Classification c;
    c.deficit_kw = Eigen::VectorXd::Zero(n);
    c.surplus_kw = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const auto& iv = intervals[i];
        if (iv.lower_kw > iv.upper_kw + 1e-9)
            throw Error("invalid flexibility interval for microgrid " + std::to_string(i));
        const double x = targets_kw(i);
        if (x <= iv.lower_kw) {
            c.deficit.push_back(i);
            c.deficit_kw(i) = iv.lower_kw - x;
            c.total_deficit_kw += c.deficit_kw(i);
        } else if (x >= iv.upper_kw) {
            c.surplus.push_back(i);
            c.surplus_kw(i) = x - iv.upper_kw;
            c.total_surplus_kw += c.surplus_kw(i);
        } else {
            c.flexible.push_back(i);
        }
    }
    return c;
}

FlowGraph build_flow_graph(const Classification& c, const std::vector<FlexInterval>& intervals,
                           const Eigen::VectorXd& targets_kw, const FlowTiers& tiers) {
    if (!(tiers.direct < tiers.flexible && tiers.flexible < tiers.market))
        throw Error("flow cost tiers must satisfy direct < flexible < market");

    const int n = static_cast<int>(intervals.size());
    FlowGraph g;
    g.mg_count = n;
    g.market_in = n;
    g.market_out = n + 1;
    g.source = n + 2;
    g.sink = n + 3;
    g.node_mg.assign(n + 4, -1);
    for (int i = 0; i < n; ++i) g.node_mg[i] = i;

    // One absorb node and one supply node per flexible microgrid.
    std::vector<int> f_in(n, -1), f_out(n, -1);
    int next = n + 4;
    for (int k : c.flexible) {
        f_in[k] = next++;
        f_out[k] = next++;
        g.node_mg.push_back(k);
        g.node_mg.push_back(k);
    }
    g.node_count = next;

    // Capacity standing in for "unbounded": total imbalance plus all spans.
    double big = c.total_deficit_kw + c.total_surplus_kw + 1.0;
    for (const auto& iv : intervals) big += std::abs(iv.upper_kw - iv.lower_kw);

    // Surplus microgrids must ship their full surplus, deficit microgrids
    // must receive their full deficit. Boundary members contribute nothing
    // and get no arcs.
    for (int i : c.surplus)
        if (c.surplus_kw(i) > 0.0) g.arcs.push_back({g.source, i, c.surplus_kw(i), 0.0});
    for (int j : c.deficit)
        if (c.deficit_kw(j) > 0.0) g.arcs.push_back({j, g.sink, c.deficit_kw(j), 0.0});

    for (int i : c.surplus) {
        if (c.surplus_kw(i) <= 0.0) continue;
        for (int j : c.deficit)
            if (c.deficit_kw(j) > 0.0) g.arcs.push_back({i, j, big, tiers.direct});
    }

    // Flexible microgrids absorb up to (u - X) and supply up to (X - l).
    for (int k : c.flexible) {
        const double absorb = intervals[k].upper_kw - targets_kw(k);
        const double supply = targets_kw(k) - intervals[k].lower_kw;
        if (absorb > 0.0) {
            for (int i : c.surplus)
                if (c.surplus_kw(i) > 0.0) g.arcs.push_back({i, f_in[k], big, tiers.flexible});
            g.arcs.push_back({f_in[k], g.sink, absorb, 0.0});
        }
        if (supply > 0.0) {
            g.arcs.push_back({g.source, f_out[k], supply, 0.0});
            for (int j : c.deficit)
                if (c.deficit_kw(j) > 0.0) g.arcs.push_back({f_out[k], j, big, tiers.flexible});
        }
    }

    // The market closes any remaining gap.
    for (int i : c.surplus)
        if (c.surplus_kw(i) > 0.0) g.arcs.push_back({i, g.market_in, big, tiers.market});
    g.arcs.push_back({g.market_in, g.sink, big, 0.0});
    g.arcs.push_back({g.source, g.market_out, big, 0.0});
    for (int j : c.deficit)
        if (c.deficit_kw(j) > 0.0) g.arcs.push_back({g.market_out, j, big, tiers.market});

    g.required_flow = std::max(c.total_surplus_kw, c.total_deficit_kw);
    return g;
}

namespace {

struct ResidualArc {
    int to;
    double cap;
    double cost;
    int original;  ///< index into FlowGraph::arcs, -1 for reverse arcs
};

}  // namespace

Eigen::VectorXd solve_min_cost_flow(const FlowGraph& g) {
    const int n = g.node_count;
    const double eps = 1e-12;

    std::vector<ResidualArc> arcs;
    std::vector<std::vector<int>> adj(n);
    arcs.reserve(2 * g.arcs.size());
    for (int a = 0; a < static_cast<int>(g.arcs.size()); ++a) {
        const auto& fa = g.arcs[a];
        adj[fa.from].push_back(static_cast<int>(arcs.size()));
        arcs.push_back({fa.to, fa.capacity, fa.cost, a});
        adj[fa.to].push_back(static_cast<int>(arcs.size()));
        arcs.push_back({fa.from, 0.0, -fa.cost, -1});
    }

    const int source = g.source;
    const int sink = g.sink;
    Eigen::VectorXd flows = Eigen::VectorXd::Zero(g.arcs.size());
    std::vector<double> potential(n, 0.0);
    double remaining = g.required_flow;

    const size_t max_augmentations = 4 * arcs.size() + 16;
    size_t rounds = 0;
    while (remaining > eps) {
        if (++rounds > max_augmentations) throw Error("min-cost flow did not terminate");

        // Dijkstra on reduced costs; ties resolved toward lower node ids.
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> dist(n, inf);
        std::vector<int> parent_arc(n, -1);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        dist[source] = 0.0;
        pq.push({0.0, source});
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d > dist[u] + eps) continue;
            for (int ai : adj[u]) {
                const auto& ra = arcs[ai];
                if (ra.cap <= eps) continue;
                const double nd = dist[u] + ra.cost + potential[u] - potential[ra.to];
                if (nd < dist[ra.to] - eps) {
                    dist[ra.to] = nd;
                    parent_arc[ra.to] = ai;
                    pq.push({nd, ra.to});
                }
            }
        }
        if (!std::isfinite(dist[sink]))
            throw Error("min-cost flow infeasible: cannot route required imbalance");

        for (int u = 0; u < n; ++u)
            if (std::isfinite(dist[u])) potential[u] += dist[u];

        double push = remaining;
        for (int v = sink; v != source; ) {
            const auto& ra = arcs[parent_arc[v]];
            push = std::min(push, ra.cap);
            v = arcs[parent_arc[v] ^ 1].to;
        }
        for (int v = sink; v != source; ) {
            const int ai = parent_arc[v];
            arcs[ai].cap -= push;
            arcs[ai ^ 1].cap += push;
            if (arcs[ai].original >= 0)
                flows(arcs[ai].original) += push;
            else
                flows(arcs[ai ^ 1].original) -= push;
            v = arcs[ai ^ 1].to;
        }
        remaining -= push;
    }
    return flows;
}

double flow_cost(const FlowGraph& g, const Eigen::VectorXd& arc_flows) {
    double cost = 0.0;
    for (int a = 0; a < static_cast<int>(g.arcs.size()); ++a) cost += g.arcs[a].cost * arc_flows(a);
    return cost;
}

TradePlan trades_from_flow(const Eigen::VectorXd& arc_flows, const FlowGraph& g,
                           const Eigen::VectorXd& targets_kw) {
    TradePlan plan = TradePlan::identity(targets_kw);
    for (int a = 0; a < static_cast<int>(g.arcs.size()); ++a) {
        const double f = arc_flows(a);
        if (f == 0.0) continue;
        const int from = g.arcs[a].from;
        const int to = g.arcs[a].to;
        if (from == g.source || to == g.sink) continue;
        const int from_mg = g.node_mg[from];
        const int to_mg = g.node_mg[to];
        if (from_mg >= 0 && to_mg >= 0) {
            // power shipped from `from` to `to`: the receiver imports
            plan.p2p_kw(to_mg, from_mg) += f;
            plan.p2p_kw(from_mg, to_mg) -= f;
        } else if (from_mg >= 0 && to == g.market_in) {
            plan.market_kw(from_mg) -= f;  // sell back: buy less than the ideal
        } else if (from == g.market_out && to_mg >= 0) {
            plan.market_kw(to_mg) += f;  // buy more than the ideal
        }
    }
    return plan;
}

TradePlan resolve_device_feasibility(const Eigen::VectorXd& targets_kw,
                                     const std::vector<FlexInterval>& intervals,
                                     const FlowTiers& tiers) {
    const Classification c = classify(targets_kw, intervals);
    if (c.all_feasible()) return TradePlan::identity(targets_kw);
    const FlowGraph g = build_flow_graph(c, intervals, targets_kw, tiers);
    const Eigen::VectorXd flows = solve_min_cost_flow(g);
    return trades_from_flow(flows, g, targets_kw);
}

}  // namespace mgsim
