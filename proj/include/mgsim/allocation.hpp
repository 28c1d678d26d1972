#pragma once

#include <limits>

#include <Eigen/Dense>

#include "mgsim/devices.hpp"

namespace mgsim {

struct AllocationResult {
    Eigen::VectorXd storage_powers_kw;
    double pv_used_kw = 0.0;
    double pv_curtailed_kw = 0.0;
};

/// Distribute a microgrid's committed power among its devices: household load
/// is served first, PV is used at the maximum feasible level (optionally
/// capped), and the remainder goes to the storages at a common level clipped
/// to their bounds (cave-filling). Exact: load - pv_used + sum(powers) equals
/// the committed power to within 1e-9 kW.
///
/// `pv_used_cap_kw` lets a controller bound PV absorption below the physical
/// maximum (e.g. to shed a systematic surplus); the default reproduces the
/// strict minimum-curtailment policy.
AllocationResult distribute_power(const MicrogridSlice& mg, double committed_kw,
                                  double pv_used_cap_kw = std::numeric_limits<double>::infinity());

/// Common-level fill: powers_d = clip(lambda, lower_d, upper_d) with lambda
/// chosen so the powers sum to `total_kw`; the tiny bisection residual is
/// assigned to the lowest-index unclipped device.
Eigen::VectorXd cave_fill(const std::vector<FlexInterval>& bounds, double total_kw);

/// Desired market power for slice t: remaining planned energy spread equally
/// over the remaining time. Energies in kWh, dt in hours, result in kW.
double update_target(double planned_energy_kwh, double exchanged_energy_kwh, int t, int T, double dt_h);

}  // namespace mgsim
