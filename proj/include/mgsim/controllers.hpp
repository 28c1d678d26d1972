#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgsim/feasibility.hpp"
#include "mgsim/grid.hpp"
#include "mgsim/qp.hpp"
#include "mgsim/repair.hpp"
#include "mgsim/scenario.hpp"

namespace mgsim {

/// Wall time spent in each step of one slice, microseconds.
struct StepTimings {
    double bounds_us = 0.0;
    double flow_us = 0.0;
    double powerflow_us = 0.0;
    double repair_us = 0.0;
    double allocation_us = 0.0;
    double total_us = 0.0;
};

/// Everything committed in one time slice; the simulation log unit.
struct SliceRecord {
    int t = 0;  ///< 1-based slice index
    Eigen::VectorXd market_kw;        ///< per microgrid
    Eigen::VectorXd device_kw;        ///< per microgrid
    Eigen::VectorXd p2p_net_kw;       ///< per microgrid, imports positive
    Eigen::VectorXd pv_used_kw;       ///< per microgrid
    Eigen::VectorXd pv_curtailed_kw;  ///< per microgrid
    Eigen::VectorXd flows_kw;         ///< per line
    Eigen::VectorXd soc_kwh;          ///< per device, flattened in fleet order
    StepTimings timings;
};

struct ViolationEvent {
    int t = 0;
    bool hard_infeasible = false;  ///< repair could not restore feasibility
    std::vector<LineViolation> violations;
};

struct RunReport {
    std::string scenario_name;
    std::string controller;
    int mg_count = 0;
    int slice_count = 0;
    std::vector<int> devices_per_mg;
    Eigen::VectorXd initial_target_kw;      ///< flat day-ahead exchange level per microgrid
    std::vector<SliceRecord> slices;
    double objective = 0.0;                 ///< sum over slices of (x_m - X0)^2
    double objective_updated_x = 0.0;       ///< same metric against the evolving level
    Eigen::VectorXd final_soc_error_kwh;    ///< per device, |E_T - target|
    std::vector<ViolationEvent> events;
    double total_runtime_s = 0.0;

    double max_line_loading(const GridCase& grid) const;
    double mean_slice_us() const;
    double max_slice_us() const;
};

struct RealtimeOptions {
    FlowTiers tiers;
    QpSettings repair_qp;
    /// Fraction of the per-slice surplus-shed step; keeps storage excess on a
    /// path that can be returned to the targets without an end-of-slot
    /// sell-off. 0 disables shedding (strict minimum-curtailment allocation).
    double shed_step_fraction = 0.25;
};

/// Three-step real-time control over one slot: device feasibility via the
/// tiered min-cost flow, grid feasibility via the PTDF repair, cave-filling
/// allocation and target update. Online: slice t uses only data revealed up
/// to t.
RunReport run_realtime_horizon(const Scenario& scenario, const RealtimeOptions& opt = {});

/// Naive baseline: every storage runs its constant planned power, PV is never
/// curtailed, the market absorbs all fluctuations. Flows are computed for
/// reporting only.
RunReport run_naive(const Scenario& scenario);

struct OfflineOptions {
    QpSettings qp;
};

/// Raised when a scenario exceeds the configured offline size cap.
class OfflineCapExceeded : public Error {
  public:
    explicit OfflineCapExceeded(const std::string& what) : Error(what) {}
};

/// Full-horizon optimum: one convex QP over all slices with device dynamics,
/// terminal targets and PTDF line limits. Serves as the lower bound on the
/// flatness objective. Refuses scenarios with microgrids x slices beyond
/// Scenario::offline_cap.
RunReport run_offline(const Scenario& scenario, const OfflineOptions& opt = {});

struct ComparisonRow {
    std::string controller;
    bool available = true;
    std::string note;
    double objective = 0.0;
    double objective_updated_x = 0.0;
    double max_soc_error_kwh = 0.0;
    double max_line_loading = 0.0;
    int violation_events = 0;
    double total_runtime_s = 0.0;
    double slice_mean_ms = 0.0;
    double slice_p50_ms = 0.0;
    double slice_p90_ms = 0.0;
    double slice_max_ms = 0.0;
};

std::vector<ComparisonRow> compare_reports(const GridCase& grid, const std::vector<RunReport>& reports);

}  // namespace mgsim
