#pragma once

#include <span>
#include <vector>

#include "mgsim/common.hpp"

namespace mgsim {

/// Battery or EV. Power limits are internal (at the cells); external grid-side
/// powers carry the efficiency conversion. Consumption is positive.
struct Storage {
    double capacity_kwh = 0.0;
    double charge_limit_kw = 0.0;     ///< internal charging limit
    double discharge_limit_kw = 0.0;  ///< internal discharging limit
    double efficiency = 1.0;          ///< charge and discharge efficiency, in (0, 1]
    double energy_kwh = 0.0;          ///< state of charge at the start of the slice
    double target_kwh = 0.0;          ///< planned energy at the end of the slot
    bool available = true;            ///< EVs only; unavailable means zero flexibility
};

/// Feasible external power band [lower, upper] for one slice, kW,
/// consumption positive. May be forced (lower > 0 or upper < 0).
struct FlexInterval {
    double lower_kw = 0.0;
    double upper_kw = 0.0;

    double width() const { return upper_kw - lower_kw; }
    bool contains(double x, double tol = 1e-9) const {
        return x >= lower_kw - tol && x <= upper_kw + tol;
    }
};

/// External power for a given internal energy rate (kWh/h): charging divides
/// by the efficiency, discharging multiplies.
double external_power_for_rate(double internal_rate_kw, double efficiency);

/// Internal energy rate produced by an external power.
double internal_rate_for_power(double external_kw, double efficiency);

/// Single-slice flexibility of a storage at slice t of T (1-based), projecting
/// the multi-slice capacity, power-limit and end-of-slot target constraints
/// onto one external power band. Returns the must-act interval when charging
/// or discharging is forced. Throws InfeasibleTarget when the target is
/// unreachable from the current state (day-ahead inconsistency).
FlexInterval storage_flex_bounds(const Storage& s, int t, int T, double dt_h);

/// One microgrid's revealed data and device bounds for a single slice.
struct MicrogridSlice {
    double load_kw = 0.0;  ///< aggregated household load, inflexible
    double pv_kw = 0.0;    ///< available PV generation, curtailable
    std::vector<FlexInterval> storage_bounds;
};

/// Aggregate device flexibility of a microgrid: upper bound assumes full PV
/// curtailment, lower bound full PV use.
FlexInterval aggregate_flex(const MicrogridSlice& mg);
FlexInterval aggregate_flex(double load_kw, double pv_kw, std::span<const FlexInterval> bounds);

/// State-of-charge update after dispatching an external power for one slice.
/// The power must lie within the slice bounds; violations indicate a
/// dispatch bug and throw.
Storage apply_dispatch(const Storage& s, double power_kw, double dt_h);

}  // namespace mgsim
