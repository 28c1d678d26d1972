#include "mgsim/devices.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mgsim {

double external_power_for_rate(double internal_rate_kw, double efficiency) {
    return internal_rate_kw >= 0.0 ? internal_rate_kw / efficiency : internal_rate_kw * efficiency;
}

double internal_rate_for_power(double external_kw, double efficiency) {
    return external_kw >= 0.0 ? external_kw * efficiency : external_kw / efficiency;
}

FlexInterval storage_flex_bounds(const Storage& s, int t, int T, double dt_h) {
    if (t < 1 || t > T) throw Error("slice index out of range");
    if (dt_h <= 0.0) throw Error("slice length must be positive");
    if (!s.available) return {0.0, 0.0};

    const int remaining = T - t;  // slices after this one

    // Feasible window for the end-of-slice energy: capacity bounds intersected
    // with the states from which the slot target stays reachable under the
    // remaining charge/discharge capability.
    const double window_lo = std::max(0.0, s.target_kwh - remaining * s.charge_limit_kw * dt_h);
    const double window_hi = std::min(s.capacity_kwh, s.target_kwh + remaining * s.discharge_limit_kw * dt_h);

    // Internal energy-rate band for this slice, then converted to external
    // power. The conversion direction follows the sign of each endpoint, so
    // forced charge/discharge intervals stay exact.
    const double rate_lo = std::max(-s.discharge_limit_kw, (window_lo - s.energy_kwh) / dt_h);
    const double rate_hi = std::min(s.charge_limit_kw, (window_hi - s.energy_kwh) / dt_h);

    if (rate_lo > rate_hi + 1e-9)
        throw InfeasibleTarget("storage target " + std::to_string(s.target_kwh) +
                               " kWh unreachable from " + std::to_string(s.energy_kwh) + " kWh at slice " +
                               std::to_string(t) + "/" + std::to_string(T));

    FlexInterval iv;
    iv.lower_kw = external_power_for_rate(rate_lo, s.efficiency);
    iv.upper_kw = external_power_for_rate(std::max(rate_lo, rate_hi), s.efficiency);
    return iv;
}

FlexInterval aggregate_flex(double load_kw, double pv_kw, std::span<const FlexInterval> bounds) {
    FlexInterval agg{load_kw - pv_kw, load_kw};
    for (const auto& b : bounds) {
        agg.lower_kw += b.lower_kw;
        agg.upper_kw += b.upper_kw;
    }
    return agg;
}

FlexInterval aggregate_flex(const MicrogridSlice& mg) {
    return aggregate_flex(mg.load_kw, mg.pv_kw, mg.storage_bounds);
}

Storage apply_dispatch(const Storage& s, double power_kw, double dt_h) {
    const double tol = 1e-9;
    if (!s.available && std::abs(power_kw) > tol)
        throw Error("dispatching an unavailable storage");
    const double ext_charge_limit = s.charge_limit_kw / s.efficiency;
    const double ext_discharge_limit = s.discharge_limit_kw * s.efficiency;
    if (power_kw > ext_charge_limit + tol || power_kw < -ext_discharge_limit - tol)
        throw Error("dispatch power " + std::to_string(power_kw) + " kW violates storage power limits");

    Storage out = s;
    out.energy_kwh = s.energy_kwh + internal_rate_for_power(power_kw, s.efficiency) * dt_h;
    if (out.energy_kwh < -1e-6 || out.energy_kwh > s.capacity_kwh + 1e-6)
        throw Error("dispatch drives state of charge out of [0, capacity]");
    out.energy_kwh = std::clamp(out.energy_kwh, 0.0, s.capacity_kwh);
    return out;
}

}  // namespace mgsim
