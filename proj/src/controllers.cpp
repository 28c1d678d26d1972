#include "mgsim/controllers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "mgsim/allocation.hpp"

namespace mgsim {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point since) {
    return std::chrono::duration<double, std::micro>(Clock::now() - since).count();
}

struct Fleet {
    std::vector<std::vector<Storage>> devices;  ///< per microgrid
    std::vector<int> counts;
    int total = 0;

    explicit Fleet(const Scenario& s) {
        for (const auto& mg : s.microgrids) {
            std::vector<Storage> list;
            for (const auto& st : mg.storages) list.push_back(st.device);
            counts.push_back(static_cast<int>(list.size()));
            total += counts.back();
            devices.push_back(std::move(list));
        }
    }

    Eigen::VectorXd soc() const {
        Eigen::VectorXd out(total);
        int k = 0;
        for (const auto& list : devices)
            for (const auto& d : list) out(k++) = d.energy_kwh;
        return out;
    }

    Eigen::VectorXd target_error() const {
        Eigen::VectorXd out(total);
        int k = 0;
        for (const auto& list : devices)
            for (const auto& d : list) out(k++) = std::abs(d.energy_kwh - d.target_kwh);
        return out;
    }
};

/// Per-slice realized load and PV, resampled from the 1 Hz profiles.
struct SliceData {
    Eigen::MatrixXd load_kw;  ///< slices x microgrids
    Eigen::MatrixXd pv_kw;

    SliceData(const Scenario& s) {
        const int T = s.slice_count();
        const int n = s.microgrid_count();
        const int dt = static_cast<int>(s.dt_seconds);
        const int slot = static_cast<int>(s.slot_seconds);
        load_kw.resize(T, n);
        pv_kw.resize(T, n);
        for (int m = 0; m < n; ++m) {
            load_kw.col(m) = resample_to_slices(s.load_realized[m], dt, slot);
            pv_kw.col(m) = resample_to_slices(s.pv_realized[m], dt, slot);
        }
    }
};

Eigen::VectorXd initial_targets(const Scenario& s) {
    const double slot_h = s.slot_seconds / kSecondsPerHour;
    Eigen::VectorXd x0(s.microgrid_count());
    for (int m = 0; m < s.microgrid_count(); ++m)
        x0(m) = s.microgrids[m].planned_market_energy_kwh / slot_h * (1.0 + s.loss_margin);
    return x0;
}

Eigen::VectorXd injections_for(const GridCase& grid, const Eigen::VectorXd& device_kw) {
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(grid.bus_count());
    for (int m = 0; m < grid.microgrid_count(); ++m) inj(grid.microgrid_buses[m]) = -device_kw(m);
    inj(grid.market_bus) = device_kw.sum();
    return inj;
}

void compute_objectives(RunReport& report) {
    report.objective = 0.0;
    for (const auto& rec : report.slices)
        report.objective += (rec.market_kw - report.initial_target_kw).squaredNorm();

    // Alternate metric against the evolving desired level, reconstructed from
    // the report's own exchange history (the dt factor cancels).
    report.objective_updated_x = 0.0;
    const int n = report.mg_count;
    const int T = report.slice_count;
    Eigen::VectorXd cum = Eigen::VectorXd::Zero(n);
    for (int t = 1; t <= T; ++t) {
        const auto& rec = report.slices[t - 1];
        for (int m = 0; m < n; ++m) {
            const double x_t = (report.initial_target_kw(m) * T - cum(m)) / (T - t + 1);
            const double d = rec.market_kw(m) - x_t;
            report.objective_updated_x += d * d;
            cum(m) += rec.market_kw(m);
        }
    }
}

void finalize_report(RunReport& report, const Fleet& fleet) {
    report.final_soc_error_kwh = fleet.target_error();
    compute_objectives(report);
}

}  // namespace

double RunReport::max_line_loading(const GridCase& grid) const {
    double worst = 0.0;
    for (const auto& rec : slices)
        for (int l = 0; l < grid.line_count(); ++l)
            worst = std::max(worst, std::abs(rec.flows_kw(l)) / grid.lines[l].thermal_limit_kw);
    return worst;
}

double RunReport::mean_slice_us() const {
    if (slices.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& rec : slices) sum += rec.timings.total_us;
    return sum / slices.size();
}

double RunReport::max_slice_us() const {
    double worst = 0.0;
    for (const auto& rec : slices) worst = std::max(worst, rec.timings.total_us);
    return worst;
}

RunReport run_realtime_horizon(const Scenario& scenario, const RealtimeOptions& opt) {
    const auto run_start = Clock::now();
    const GridCase& grid = scenario.grid;
    const int n = scenario.microgrid_count();
    const int T = scenario.slice_count();
    const double dt_h = scenario.dt_hours();

    if (n != grid.microgrid_count())
        throw Error("scenario must define every microgrid of the grid case");

    const SliceData data(scenario);
    Fleet fleet(scenario);
    const DcSolver solver(grid);
    const PtdfMatrix ptdf = compute_ptdf(grid);

    RunReport report;
    report.scenario_name = scenario.name;
    report.controller = "rtc";
    report.mg_count = n;
    report.slice_count = T;
    report.devices_per_mg = fleet.counts;
    report.initial_target_kw = initial_targets(scenario);
    report.slices.reserve(T);

    // Per-microgrid surplus-shed band: mid-slot the fleet may bank energy up
    // to what the device tethers can return ((T-t) slices of discharging);
    // over the last few slices the allowance tapers to what the final slice
    // can still dump against curtailed PV. Surplus beyond the band is shed
    // by capping PV absorption.
    const int taper_slices = std::min(8, T);
    std::vector<double> shed_relax_kwh(n, 0.0), shed_end_kwh(n, 0.0);
    const double slot_h = T * dt_h;
    for (int m = 0; m < n; ++m) {
        double discharge_int = 0.0;
        double eff = 1.0;
        for (const auto& d : fleet.devices[m]) {
            discharge_int += d.discharge_limit_kw;
            eff = std::min(eff, d.efficiency);
        }
        const double pv_avg_kw = scenario.microgrids[m].pv_slot_energy_kwh / slot_h;
        shed_relax_kwh[m] = opt.shed_step_fraction * eff * discharge_int * dt_h;
        shed_end_kwh[m] = 0.5 * eff * std::min(discharge_int, pv_avg_kw) * dt_h;
    }
    auto shed_band_kwh = [&](int m, int t) {
        const int remaining = T - t;
        const int tail = std::min(remaining, taper_slices);
        return (remaining - tail) * shed_relax_kwh[m] + tail * shed_end_kwh[m];
    };

    Eigen::VectorXd desired = report.initial_target_kw;
    Eigen::VectorXd exchanged_kwh = Eigen::VectorXd::Zero(n);

    std::vector<MicrogridSlice> mg_slices(n);
    std::vector<FlexInterval> aggregates(n);

    for (int t = 1; t <= T; ++t) {
        SliceRecord rec;
        rec.t = t;
        const auto slice_start = Clock::now();

        // Reveal realizations and project device flexibility onto this slice.
        auto step_start = Clock::now();
        for (int m = 0; m < n; ++m) {
            auto& mgs = mg_slices[m];
            mgs.load_kw = data.load_kw(t - 1, m);
            mgs.pv_kw = data.pv_kw(t - 1, m);
            mgs.storage_bounds.resize(fleet.devices[m].size());
            for (std::size_t d = 0; d < fleet.devices[m].size(); ++d)
                mgs.storage_bounds[d] = storage_flex_bounds(fleet.devices[m][d], t, T, dt_h);
            aggregates[m] = aggregate_flex(mgs);
        }
        rec.timings.bounds_us = elapsed_us(step_start);

        // Step 1: ideal exchange, repaired by the min-cost flow when needed.
        step_start = Clock::now();
        TradePlan plan = resolve_device_feasibility(desired, aggregates, opt.tiers);
        rec.timings.flow_us = elapsed_us(step_start);

        // Step 2: grid feasibility.
        step_start = Clock::now();
        Eigen::VectorXd device = plan.device_kw();
        DcSolution flow = solver.solve(injections_for(grid, device));
        auto violations = check_line_limits(grid, flow.flows_kw);
        rec.timings.powerflow_us = elapsed_us(step_start);

        if (!violations.empty()) {
            step_start = Clock::now();
            const RepairProblem rp = build_repair_problem(grid, ptdf, aggregates, plan, flow.flows_kw);
            const RepairResult rr = solve_repair(rp, opt.repair_qp);
            plan = apply_repair(plan, rr.delta_kw);
            device = plan.device_kw();
            flow = solver.solve(injections_for(grid, device));
            violations = check_line_limits(grid, flow.flows_kw);
            if (rr.hard_infeasible || !violations.empty()) {
                ViolationEvent ev;
                ev.t = t;
                ev.hard_infeasible = rr.hard_infeasible;
                ev.violations = violations;
                report.events.push_back(ev);
            }
            rec.timings.repair_us = elapsed_us(step_start);
        }

        // Step 3: distribute each microgrid's committed power and update state.
        step_start = Clock::now();
        rec.pv_used_kw.resize(n);
        rec.pv_curtailed_kw.resize(n);
        for (int m = 0; m < n; ++m) {
            auto& devices = fleet.devices[m];
            double excess_kwh = 0.0;
            for (const auto& d : devices) excess_kwh += d.energy_kwh - d.target_kwh;
            double pv_cap = std::numeric_limits<double>::infinity();
            if (opt.shed_step_fraction > 0.0 && !devices.empty()) {
                const double band = shed_band_kwh(m, t);
                const double rate_cap = (band - excess_kwh) / dt_h;
                double eff = 1.0;
                for (const auto& d : devices) eff = std::min(eff, d.efficiency);
                const double remainder = device(m) - mg_slices[m].load_kw;
                pv_cap = external_power_for_rate(rate_cap, eff) - remainder;
            }
            const AllocationResult alloc = distribute_power(mg_slices[m], device(m), pv_cap);
            rec.pv_used_kw(m) = alloc.pv_used_kw;
            rec.pv_curtailed_kw(m) = alloc.pv_curtailed_kw;
            for (std::size_t d = 0; d < devices.size(); ++d)
                devices[d] = apply_dispatch(devices[d], alloc.storage_powers_kw(d), dt_h);
        }
        rec.timings.allocation_us = elapsed_us(step_start);

        // Bookkeeping and target update for the next slice.
        for (int m = 0; m < n; ++m) exchanged_kwh(m) += plan.market_kw(m) * dt_h;
        if (t < T)
            for (int m = 0; m < n; ++m)
                desired(m) = update_target(scenario.microgrids[m].planned_market_energy_kwh *
                                               (1.0 + scenario.loss_margin),
                                           exchanged_kwh(m), t + 1, T, dt_h);

        rec.market_kw = plan.market_kw;
        rec.device_kw = device;
        rec.p2p_net_kw = plan.p2p_net_kw();
        rec.flows_kw = flow.flows_kw;
        rec.soc_kwh = fleet.soc();
        rec.timings.total_us = elapsed_us(slice_start);
        report.slices.push_back(std::move(rec));
    }

    finalize_report(report, fleet);
    report.total_runtime_s = elapsed_us(run_start) / 1e6;
    return report;
}

RunReport run_naive(const Scenario& scenario) {
    const auto run_start = Clock::now();
    const GridCase& grid = scenario.grid;
    const int n = scenario.microgrid_count();
    const int T = scenario.slice_count();
    const double dt_h = scenario.dt_hours();

    const SliceData data(scenario);
    Fleet fleet(scenario);
    const DcSolver solver(grid);

    RunReport report;
    report.scenario_name = scenario.name;
    report.controller = "naive";
    report.mg_count = n;
    report.slice_count = T;
    report.devices_per_mg = fleet.counts;
    report.initial_target_kw = initial_targets(scenario);

    // Constant external power per storage; exact under constant efficiency.
    std::vector<Eigen::VectorXd> planned(n);
    for (int m = 0; m < n; ++m) {
        planned[m].resize(fleet.devices[m].size());
        for (std::size_t d = 0; d < fleet.devices[m].size(); ++d) {
            const auto& dev = fleet.devices[m][d];
            const double delta = dev.target_kwh - dev.energy_kwh;
            planned[m](d) = delta >= 0 ? delta / (dev.efficiency * T * dt_h)
                                       : delta * dev.efficiency / (T * dt_h);
        }
    }

    for (int t = 1; t <= T; ++t) {
        SliceRecord rec;
        rec.t = t;
        const auto slice_start = Clock::now();

        rec.market_kw.resize(n);
        rec.pv_used_kw.resize(n);
        rec.pv_curtailed_kw = Eigen::VectorXd::Zero(n);
        for (int m = 0; m < n; ++m) {
            rec.pv_used_kw(m) = data.pv_kw(t - 1, m);
            rec.market_kw(m) = data.load_kw(t - 1, m) - data.pv_kw(t - 1, m) + planned[m].sum();
            for (std::size_t d = 0; d < fleet.devices[m].size(); ++d)
                fleet.devices[m][d] = apply_dispatch(fleet.devices[m][d], planned[m](d), dt_h);
        }
        rec.device_kw = rec.market_kw;
        rec.p2p_net_kw = Eigen::VectorXd::Zero(n);

        const DcSolution flow = solver.solve(injections_for(grid, rec.device_kw));
        rec.flows_kw = flow.flows_kw;
        const auto violations = check_line_limits(grid, flow.flows_kw);
        if (!violations.empty()) report.events.push_back({t, false, violations});

        rec.soc_kwh = fleet.soc();
        rec.timings.total_us = elapsed_us(slice_start);
        report.slices.push_back(std::move(rec));
    }

    finalize_report(report, fleet);
    report.total_runtime_s = elapsed_us(run_start) / 1e6;
    return report;
}

RunReport run_offline(const Scenario& scenario, const OfflineOptions& opt) {
    const auto run_start = Clock::now();
    const GridCase& grid = scenario.grid;
    const int n = scenario.microgrid_count();
    const int T = scenario.slice_count();
    const double dt_h = scenario.dt_hours();

    if (static_cast<long>(n) * T > scenario.offline_cap)
        throw OfflineCapExceeded("offline model refused: microgrids x slices = " +
                                 std::to_string(static_cast<long>(n) * T) + " exceeds the cap of " +
                                 std::to_string(scenario.offline_cap) +
                                 " (dense full-horizon model would not fit)");

    const SliceData data(scenario);
    Fleet fleet(scenario);
    const DcSolver solver(grid);
    const PtdfMatrix ptdf = compute_ptdf(grid);
    const Eigen::VectorXd x0 = initial_targets(scenario);
    const int L = grid.line_count();

    // Device table, flattened.
    struct Dev {
        int mg;
        Storage st;
    };
    std::vector<Dev> devs;
    for (int m = 0; m < n; ++m)
        for (const auto& d : fleet.devices[m]) devs.push_back({m, d});
    const int D = static_cast<int>(devs.size());

    // Variable layout per slice: xM (n), charge c (D), discharge g (D),
    // pv used v (n), state of charge E (D).
    const int per_t = n + 2 * D + n + D;
    const int nv = per_t * T;
    auto idx_xm = [&](int m, int t) { return t * per_t + m; };
    auto idx_c = [&](int d, int t) { return t * per_t + n + d; };
    auto idx_g = [&](int d, int t) { return t * per_t + n + D + d; };
    auto idx_pv = [&](int m, int t) { return t * per_t + n + 2 * D + m; };
    auto idx_e = [&](int d, int t) { return t * per_t + n + 2 * D + n + d; };

    std::vector<Eigen::Triplet<double>> p_trips, a_trips;
    std::vector<double> lb, ub;
    int row = 0;
    auto add_row = [&](double lo, double hi) {
        lb.push_back(lo);
        ub.push_back(hi);
        return row++;
    };

    Eigen::VectorXd q = Eigen::VectorXd::Zero(nv);
    for (int t = 0; t < T; ++t)
        for (int m = 0; m < n; ++m) {
            p_trips.emplace_back(idx_xm(m, t), idx_xm(m, t), 2.0);
            q(idx_xm(m, t)) = -2.0 * x0(m);
        }

    for (int t = 0; t < T; ++t) {
        // Balance: sum_i xM = sum_i xD, with xD = load - v + sum(c - g).
        double load_sum = 0.0;
        const int balance = add_row(0.0, 0.0);
        for (int m = 0; m < n; ++m) {
            a_trips.emplace_back(balance, idx_xm(m, t), 1.0);
            a_trips.emplace_back(balance, idx_pv(m, t), 1.0);
            load_sum += data.load_kw(t, m);
        }
        for (int d = 0; d < D; ++d) {
            a_trips.emplace_back(balance, idx_c(d, t), -1.0);
            a_trips.emplace_back(balance, idx_g(d, t), 1.0);
        }
        lb[balance] = ub[balance] = load_sum;

        // Line limits through the injection shift factors.
        for (int l = 0; l < L; ++l) {
            double base = 0.0;
            const int r = add_row(0.0, 0.0);
            for (int m = 0; m < n; ++m) {
                const double psi = ptdf.shift_factor(l, grid.microgrid_buses[m]);
                if (psi == 0.0) continue;
                base += -psi * data.load_kw(t, m);
                a_trips.emplace_back(r, idx_pv(m, t), psi);
            }
            for (int d = 0; d < D; ++d) {
                const double psi = ptdf.shift_factor(l, grid.microgrid_buses[devs[d].mg]);
                if (psi == 0.0) continue;
                a_trips.emplace_back(r, idx_c(d, t), -psi);
                a_trips.emplace_back(r, idx_g(d, t), psi);
            }
            lb[r] = -grid.lines[l].thermal_limit_kw - base;
            ub[r] = grid.lines[l].thermal_limit_kw - base;
        }

        // Device dynamics and boxes.
        for (int d = 0; d < D; ++d) {
            const auto& st = devs[d].st;
            const int rec_row = add_row(0.0, 0.0);
            a_trips.emplace_back(rec_row, idx_e(d, t), 1.0);
            a_trips.emplace_back(rec_row, idx_c(d, t), -st.efficiency * dt_h);
            a_trips.emplace_back(rec_row, idx_g(d, t), dt_h / st.efficiency);
            if (t > 0) {
                a_trips.emplace_back(rec_row, idx_e(d, t - 1), -1.0);
                lb[rec_row] = ub[rec_row] = 0.0;
            } else {
                lb[rec_row] = ub[rec_row] = st.energy_kwh;
            }

            const int e_box = add_row(0.0, st.capacity_kwh);
            a_trips.emplace_back(e_box, idx_e(d, t), 1.0);
            if (t == T - 1) {
                lb[e_box] = ub[e_box] = st.target_kwh;  // terminal equality
            }

            const double avail = st.available ? 1.0 : 0.0;
            const int c_box = add_row(0.0, avail * st.charge_limit_kw / st.efficiency);
            a_trips.emplace_back(c_box, idx_c(d, t), 1.0);
            const int g_box = add_row(0.0, avail * st.discharge_limit_kw * st.efficiency);
            a_trips.emplace_back(g_box, idx_g(d, t), 1.0);
        }

        for (int m = 0; m < n; ++m) {
            const int v_box = add_row(0.0, std::max(0.0, data.pv_kw(t, m)));
            a_trips.emplace_back(v_box, idx_pv(m, t), 1.0);
        }
    }

    QpProblem qp;
    qp.P.resize(nv, nv);
    qp.P.setFromTriplets(p_trips.begin(), p_trips.end());
    qp.q = q;
    qp.A.resize(row, nv);
    qp.A.setFromTriplets(a_trips.begin(), a_trips.end());
    qp.lb = Eigen::Map<Eigen::VectorXd>(lb.data(), row);
    qp.ub = Eigen::Map<Eigen::VectorXd>(ub.data(), row);

    const QpResult sol = solve_qp(qp, opt.qp);
    if (sol.status != QpStatus::Solved && !sol.polished)
        throw Error("offline model did not converge (primal residual " +
                    std::to_string(sol.primal_residual) + ")");

    RunReport report;
    report.scenario_name = scenario.name;
    report.controller = "offline";
    report.mg_count = n;
    report.slice_count = T;
    report.devices_per_mg = fleet.counts;
    report.initial_target_kw = x0;
    report.final_soc_error_kwh.resize(D);

    for (int t = 0; t < T; ++t) {
        SliceRecord rec;
        rec.t = t + 1;
        rec.market_kw.resize(n);
        rec.device_kw.resize(n);
        rec.pv_used_kw.resize(n);
        rec.pv_curtailed_kw.resize(n);
        rec.soc_kwh.resize(D);
        for (int m = 0; m < n; ++m) {
            rec.market_kw(m) = sol.x(idx_xm(m, t));
            rec.pv_used_kw(m) = sol.x(idx_pv(m, t));
            rec.pv_curtailed_kw(m) = data.pv_kw(t, m) - rec.pv_used_kw(m);
            rec.device_kw(m) = data.load_kw(t, m) - rec.pv_used_kw(m);
        }
        for (int d = 0; d < D; ++d) {
            rec.device_kw(devs[d].mg) += sol.x(idx_c(d, t)) - sol.x(idx_g(d, t));
            rec.soc_kwh(d) = sol.x(idx_e(d, t));
        }
        rec.p2p_net_kw = rec.device_kw - rec.market_kw;
        rec.flows_kw = solver.solve(injections_for(grid, rec.device_kw)).flows_kw;
        report.slices.push_back(std::move(rec));
    }
    for (int d = 0; d < D; ++d)
        report.final_soc_error_kwh(d) = std::abs(sol.x(idx_e(d, T - 1)) - devs[d].st.target_kwh);

    compute_objectives(report);
    report.total_runtime_s = elapsed_us(run_start) / 1e6;
    return report;
}

std::vector<ComparisonRow> compare_reports(const GridCase& grid, const std::vector<RunReport>& reports) {
    std::vector<ComparisonRow> rows;
    for (const auto& r : reports) {
        ComparisonRow row;
        row.controller = r.controller;
        row.objective = r.objective;
        row.objective_updated_x = r.objective_updated_x;
        row.max_soc_error_kwh = r.final_soc_error_kwh.size() ? r.final_soc_error_kwh.maxCoeff() : 0.0;
        row.max_line_loading = r.max_line_loading(grid);
        row.violation_events = static_cast<int>(r.events.size());
        row.total_runtime_s = r.total_runtime_s;

        std::vector<double> per_slice;
        per_slice.reserve(r.slices.size());
        for (const auto& rec : r.slices) per_slice.push_back(rec.timings.total_us / 1000.0);
        if (!per_slice.empty()) {
            std::sort(per_slice.begin(), per_slice.end());
            auto quantile = [&](double p) {
                const double pos = p * (per_slice.size() - 1);
                const std::size_t i = static_cast<std::size_t>(pos);
                const double frac = pos - i;
                return i + 1 < per_slice.size() ? per_slice[i] * (1 - frac) + per_slice[i + 1] * frac
                                                : per_slice[i];
            };
            row.slice_mean_ms =
                std::accumulate(per_slice.begin(), per_slice.end(), 0.0) / per_slice.size();
            row.slice_p50_ms = quantile(0.5);
            row.slice_p90_ms = quantile(0.9);
            row.slice_max_ms = per_slice.back();
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mgsim
