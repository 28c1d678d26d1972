#pragma once

#include <string>
#include <vector>

#include "mgsim/controllers.hpp"

namespace mgsim {

/// One row per slice per microgrid: t, mg, x_market_kw, p2p_net_kw,
/// x_device_kw, pv_curtailed_kw, then one SoC column per device slot (blank
/// for microgrids with fewer devices). Column order is fixed.
std::string slices_csv(const RunReport& report);

/// One row per slice per line: t, line, from_bus, to_bus, flow_kw, limit_kw.
std::string lines_csv(const RunReport& report, const GridCase& grid);

/// Summary document: objectives, SoC errors, violations and step timings.
std::string report_json(const RunReport& report);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// PTDF table in long form: line, bus_i, bus_j, phi.
std::string ptdf_csv(const GridCase& grid, const PtdfMatrix& ptdf);

/// Line flows for a given injection vector: line, from_bus, to_bus, flow_kw.
std::string flows_csv(const GridCase& grid, const Eigen::VectorXd& flows_kw);

void write_file(const std::string& path, const std::string& content);

}  // namespace mgsim
