#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mgsim/controllers.hpp"
#include "mgsim/report_io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolations = 2;

mgsim::RunReport run_controller(const mgsim::Scenario& scenario, const std::string& controller) {
    if (controller == "rtc") return mgsim::run_realtime_horizon(scenario);
    if (controller == "naive") return mgsim::run_naive(scenario);
    if (controller == "offline") return mgsim::run_offline(scenario);
    throw mgsim::Error("unknown controller '" + controller + "' (expected rtc|naive|offline)");
}

void write_run_outputs(const mgsim::RunReport& report, const mgsim::GridCase& grid,
                       const std::string& out_dir) {
    fs::create_directories(out_dir);
    mgsim::write_file((fs::path(out_dir) / "slices.csv").string(), mgsim::slices_csv(report));
    mgsim::write_file((fs::path(out_dir) / "lines.csv").string(), mgsim::lines_csv(report, grid));
    mgsim::write_file((fs::path(out_dir) / "report.json").string(), mgsim::report_json(report));
}

int cmd_run(const std::string& scenario_path, const std::string& controller, const std::string& out_dir) {
    const mgsim::Scenario scenario = mgsim::load_scenario(scenario_path);
    const mgsim::RunReport report = run_controller(scenario, controller);
    write_run_outputs(report, scenario.grid, out_dir);
    std::cout << controller << " objective " << report.objective << " kW^2, "
              << report.events.size() << " violation event(s), " << report.total_runtime_s
              << " s\n";
    return report.events.empty() ? kExitOk : kExitViolations;
}

int cmd_compare(const std::string& scenario_path, const std::string& out_dir) {
    const mgsim::Scenario scenario = mgsim::load_scenario(scenario_path);
    std::vector<mgsim::RunReport> reports;
    std::vector<mgsim::ComparisonRow> rows;
    bool violations = false;

    for (const std::string controller : {"rtc", "naive", "offline"}) {
        try {
            reports.push_back(run_controller(scenario, controller));
            violations |= !reports.back().events.empty();
        } catch (const mgsim::OfflineCapExceeded& e) {
            mgsim::ComparisonRow row;
            row.controller = controller;
            row.available = false;
            row.note = e.what();
            rows.push_back(row);
            std::cerr << e.what() << "\n";
        }
    }
    auto computed = mgsim::compare_reports(scenario.grid, reports);
    computed.insert(computed.end(), rows.begin(), rows.end());

    fs::create_directories(out_dir);
    mgsim::write_file((fs::path(out_dir) / "compare.csv").string(), mgsim::comparison_csv(computed));
    for (const auto& report : reports) {
        const std::string sub = (fs::path(out_dir) / report.controller).string();
        write_run_outputs(report, scenario.grid, sub);
    }
    std::cout << mgsim::comparison_csv(computed);
    return violations ? kExitViolations : kExitOk;
}

int cmd_ptdf(const std::string& case_path, const std::string& out_path) {
    const mgsim::GridCase grid = mgsim::load_grid_case(case_path);
    const mgsim::PtdfMatrix ptdf = mgsim::compute_ptdf(grid);
    const std::string csv = mgsim::ptdf_csv(grid, ptdf);
    if (out_path == "-")
        std::cout << csv;
    else
        mgsim::write_file(out_path, csv);
    return kExitOk;
}

int cmd_powerflow(const std::string& case_path, const std::string& injections_path,
                  const std::string& out_path) {
    const mgsim::GridCase grid = mgsim::load_grid_case(case_path);

    // Injection file: header bus_id,power_kw; any bus not listed gets zero;
    // the market bus absorbs the residual.
    std::ifstream in(injections_path);
    if (!in) throw mgsim::Error("cannot open injections: " + injections_path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("bus_id,power_kw", 0) != 0)
        throw mgsim::ParseError("injection header must be 'bus_id,power_kw'");
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(grid.bus_count());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw mgsim::ParseError("malformed injection row");
        const int bus = std::stoi(line.substr(0, comma));
        inj(grid.bus_index(bus)) += std::stod(line.substr(comma + 1));
    }
    inj(grid.market_bus) -= inj.sum();

    const auto sol = mgsim::solve_dc_power_flow(grid, inj);
    const std::string csv = mgsim::flows_csv(grid, sol.flows_kw);
    if (out_path == "-")
        std::cout << csv;
    else
        mgsim::write_file(out_path, csv);
    return kExitOk;
}

int cmd_convert(const std::string& in_path, const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw mgsim::Error("cannot open matpower case: " + in_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const mgsim::GridCase grid = mgsim::parse_matpower(buf.str());
    mgsim::write_file(out_path, mgsim::write_case_file(grid));
    std::cout << "wrote " << out_path << ": " << grid.bus_count() << " buses, " << grid.line_count()
              << " lines, " << grid.microgrid_count() << " microgrids\n";
    return kExitOk;
}

int cmd_gen_scenario(const std::string& case_path, double dt_s, double slot_s, std::uint64_t seed,
                     double pv_factor, double pv_fraction, int ev_override,
                     const std::string& out_path) {
    mgsim::DefaultScenarioOptions opt;
    opt.dt_seconds = dt_s;
    opt.slot_seconds = slot_s;
    opt.seed = seed;
    opt.pv_realization_factor = pv_factor;
    opt.pv_energy_fraction = pv_fraction;
    opt.ev_count_override = ev_override;
    const mgsim::Scenario scenario = mgsim::build_default_scenario(case_path, opt);
    mgsim::save_scenario(scenario, out_path);
    std::cout << "wrote " << out_path << ": " << scenario.microgrid_count() << " microgrids, "
              << scenario.slice_count() << " slices\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real-time balancing simulator for microgrids on MV grids"};
    app.require_subcommand(1);

    std::string scenario_path, controller = "rtc", out_dir = "out";
    auto* run = app.add_subcommand("run", "Run one controller over a scenario");
    run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    run->add_option("--controller", controller, "rtc|naive|offline");
    run->add_option("--out", out_dir, "Output directory");

    std::string cmp_scenario, cmp_out = "out";
    auto* cmp = app.add_subcommand("compare", "Run all three controllers and tabulate");
    cmp->add_option("--scenario", cmp_scenario, "Scenario JSON file")->required();
    cmp->add_option("--out", cmp_out, "Output directory");

    std::string ptdf_case, ptdf_out = "-";
    auto* ptdf = app.add_subcommand("ptdf", "Emit the PTDF table for a grid case");
    ptdf->add_option("--case", ptdf_case, "Grid case file")->required();
    ptdf->add_option("--out", ptdf_out, "Output CSV path or -");

    std::string pf_case, pf_inj, pf_out = "-";
    auto* pf = app.add_subcommand("powerflow", "DC power flow for an injection file");
    pf->add_option("--case", pf_case, "Grid case file")->required();
    pf->add_option("--injections", pf_inj, "CSV bus_id,power_kw")->required();
    pf->add_option("--out", pf_out, "Output CSV path or -");

    std::string conv_in, conv_out;
    auto* conv = app.add_subcommand("convert-matpower", "Convert a Matpower .m case");
    conv->add_option("--in", conv_in, "Matpower .m file")->required();
    conv->add_option("--out", conv_out, "Native case file")->required();

    std::string gen_case, gen_out = "scenario.json";
    double gen_dt = 15, gen_slot = 900, gen_factor = 1.0, gen_fraction = 0.45;
    std::uint64_t gen_seed = 1;
    int gen_ev = -1;
    auto* gen = app.add_subcommand("gen-scenario", "Write a default scenario for a grid case");
    gen->add_option("--case", gen_case, "Grid case file")->required();
    gen->add_option("--dt", gen_dt, "Slice length in seconds");
    gen->add_option("--slot", gen_slot, "Slot length in seconds");
    gen->add_option("--seed", gen_seed, "Profile seed");
    gen->add_option("--pv-factor", gen_factor, "PV realization factor");
    gen->add_option("--pv-fraction", gen_fraction, "PV slot energy as a fraction of load energy");
    gen->add_option("--evs-per-mg", gen_ev, "Fixed EV count per microgrid (-1 derives from households)");
    gen->add_option("--out", gen_out, "Scenario JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario_path, controller, out_dir);
        if (cmp->parsed()) return cmd_compare(cmp_scenario, cmp_out);
        if (ptdf->parsed()) return cmd_ptdf(ptdf_case, ptdf_out);
        if (pf->parsed()) return cmd_powerflow(pf_case, pf_inj, pf_out);
        if (conv->parsed()) return cmd_convert(conv_in, conv_out);
        if (gen->parsed())
            return cmd_gen_scenario(gen_case, gen_dt, gen_slot, gen_seed, gen_factor, gen_fraction,
                                    gen_ev, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
