#include "mgsim/report_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mgsim {

using nlohmann::json;

namespace {

void put(std::ostringstream& out, double v) {
    out.precision(12);
    out << v;
}

json timing_stats(const std::vector<double>& values) {
    json j;
    if (values.empty()) {
        j["mean_us"] = 0.0;
        j["max_us"] = 0.0;
        j["p50_us"] = 0.0;
        j["p90_us"] = 0.0;
        return j;
    }
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    auto quantile = [&](double p) {
        const double pos = p * (v.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double frac = pos - i;
        return i + 1 < v.size() ? v[i] * (1 - frac) + v[i + 1] * frac : v[i];
    };
    j["mean_us"] = sum / v.size();
    j["max_us"] = v.back();
    j["p50_us"] = quantile(0.5);
    j["p90_us"] = quantile(0.9);
    return j;
}

}  // namespace

std::string slices_csv(const RunReport& report) {
    const int max_devices =
        report.devices_per_mg.empty()
            ? 0
            : *std::max_element(report.devices_per_mg.begin(), report.devices_per_mg.end());

    std::ostringstream out;
    out << "t,mg,x_market_kw,p2p_net_kw,x_device_kw,pv_curtailed_kw";
    for (int d = 0; d < max_devices; ++d) out << ",soc_" << d << "_kwh";
    out << "\n";

    for (const auto& rec : report.slices) {
        int soc_offset = 0;
        for (int m = 0; m < report.mg_count; ++m) {
            out << rec.t << "," << m << ",";
            put(out, rec.market_kw(m));
            out << ",";
            put(out, rec.p2p_net_kw(m));
            out << ",";
            put(out, rec.device_kw(m));
            out << ",";
            put(out, rec.pv_curtailed_kw(m));
            for (int d = 0; d < max_devices; ++d) {
                out << ",";
                if (d < report.devices_per_mg[m]) put(out, rec.soc_kwh(soc_offset + d));
            }
            out << "\n";
            soc_offset += report.devices_per_mg[m];
        }
    }
    return out.str();
}

std::string lines_csv(const RunReport& report, const GridCase& grid) {
    std::ostringstream out;
    out << "t,line,from_bus,to_bus,flow_kw,limit_kw\n";
    for (const auto& rec : report.slices) {
        for (int l = 0; l < grid.line_count(); ++l) {
            const auto& line = grid.lines[l];
            out << rec.t << "," << l << "," << grid.buses[line.from].id << ","
                << grid.buses[line.to].id << ",";
            put(out, rec.flows_kw(l));
            out << ",";
            put(out, line.thermal_limit_kw);
            out << "\n";
        }
    }
    return out.str();
}

std::string report_json(const RunReport& report) {
    json j;
    j["scenario"] = report.scenario_name;
    j["controller"] = report.controller;
    j["microgrids"] = report.mg_count;
    j["slices"] = report.slice_count;
    j["objective_kw2"] = report.objective;
    j["objective_updated_x_kw2"] = report.objective_updated_x;
    j["total_runtime_s"] = report.total_runtime_s;

    j["initial_target_kw"] = json::array();
    for (int m = 0; m < report.initial_target_kw.size(); ++m)
        j["initial_target_kw"].push_back(report.initial_target_kw(m));

    j["final_soc_error_kwh"] = json::array();
    double max_err = 0.0;
    for (int d = 0; d < report.final_soc_error_kwh.size(); ++d) {
        j["final_soc_error_kwh"].push_back(report.final_soc_error_kwh(d));
        max_err = std::max(max_err, report.final_soc_error_kwh(d));
    }
    j["max_final_soc_error_kwh"] = max_err;

    j["violations"] = json::array();
    for (const auto& ev : report.events) {
        json je;
        je["t"] = ev.t;
        je["hard_infeasible"] = ev.hard_infeasible;
        je["lines"] = json::array();
        for (const auto& v : ev.violations) {
            json jv;
            jv["line"] = v.line;
            jv["overload_kw"] = v.overload_kw;
            je["lines"].push_back(jv);
        }
        j["violations"].push_back(je);
    }

    std::vector<double> bounds, flow, powerflow, repair, allocation, total;
    for (const auto& rec : report.slices) {
        bounds.push_back(rec.timings.bounds_us);
        flow.push_back(rec.timings.flow_us);
        powerflow.push_back(rec.timings.powerflow_us);
        repair.push_back(rec.timings.repair_us);
        allocation.push_back(rec.timings.allocation_us);
        total.push_back(rec.timings.total_us);
    }
    j["timings"]["bounds"] = timing_stats(bounds);
    j["timings"]["flow"] = timing_stats(flow);
    j["timings"]["powerflow"] = timing_stats(powerflow);
    j["timings"]["repair"] = timing_stats(repair);
    j["timings"]["allocation"] = timing_stats(allocation);
    j["timings"]["slice"] = timing_stats(total);

    return j.dump(2) + "\n";
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "controller,status,objective_kw2,objective_updated_x_kw2,max_soc_error_kwh,"
           "max_line_loading,violation_events,total_runtime_s,slice_mean_ms,slice_p50_ms,"
           "slice_p90_ms,slice_max_ms\n";
    for (const auto& r : rows) {
        out << r.controller << "," << (r.available ? "ok" : "unavailable") << ",";
        if (r.available) {
            put(out, r.objective);
            out << ",";
            put(out, r.objective_updated_x);
            out << ",";
            put(out, r.max_soc_error_kwh);
            out << ",";
            put(out, r.max_line_loading);
            out << "," << r.violation_events << ",";
            put(out, r.total_runtime_s);
            out << ",";
            put(out, r.slice_mean_ms);
            out << ",";
            put(out, r.slice_p50_ms);
            out << ",";
            put(out, r.slice_p90_ms);
            out << ",";
            put(out, r.slice_max_ms);
        } else {
            out << ",,,,,,,,,";
            out << r.note;
        }
        out << "\n";
    }
    return out.str();
}

std::string ptdf_csv(const GridCase& grid, const PtdfMatrix& ptdf) {
    std::ostringstream out;
    out << "line,bus_i,bus_j,phi\n";
    for (int l = 0; l < ptdf.line_count(); ++l)
        for (int i = 0; i < grid.bus_count(); ++i)
            for (int jb = 0; jb < grid.bus_count(); ++jb) {
                out << l << "," << grid.buses[i].id << "," << grid.buses[jb].id << ",";
                put(out, ptdf(l, i, jb));
                out << "\n";
            }
    return out.str();
}

std::string flows_csv(const GridCase& grid, const Eigen::VectorXd& flows_kw) {
    std::ostringstream out;
    out << "line,from_bus,to_bus,flow_kw\n";
    for (int l = 0; l < grid.line_count(); ++l) {
        out << l << "," << grid.buses[grid.lines[l].from].id << "," << grid.buses[grid.lines[l].to].id
            << ",";
        put(out, flows_kw(l));
        out << "\n";
    }
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
}

}  // namespace mgsim
