#include "mgsim/allocation.hpp"

#include <algorithm>
#include <cmath>

namespace mgsim {

Eigen::VectorXd cave_fill(const std::vector<FlexInterval>& bounds, double total_kw) {
    const int n = static_cast<int>(bounds.size());
    Eigen::VectorXd powers = Eigen::VectorXd::Zero(n);
    if (n == 0) {
        if (std::abs(total_kw) > 1e-9) throw Error("cannot allocate power without devices");
        return powers;
    }

    double sum_lo = 0.0, sum_hi = 0.0;
    double lambda_lo = bounds[0].lower_kw, lambda_hi = bounds[0].upper_kw;
    for (const auto& b : bounds) {
        sum_lo += b.lower_kw;
        sum_hi += b.upper_kw;
        lambda_lo = std::min(lambda_lo, b.lower_kw);
        lambda_hi = std::max(lambda_hi, b.upper_kw);
    }
    if (total_kw < sum_lo - 1e-6 || total_kw > sum_hi + 1e-6)
        throw Error("allocation target outside aggregate device bounds");
    total_kw = std::clamp(total_kw, sum_lo, sum_hi);

    // The clipped sum is continuous and nondecreasing in lambda.
    auto filled = [&](double lambda) {
        double s = 0.0;
        for (const auto& b : bounds) s += std::clamp(lambda, b.lower_kw, b.upper_kw);
        return s;
    };
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lambda_lo + lambda_hi);
        if (filled(mid) < total_kw)
            lambda_lo = mid;
        else
            lambda_hi = mid;
    }
    const double lambda = 0.5 * (lambda_lo + lambda_hi);
    for (int d = 0; d < n; ++d) powers(d) = std::clamp(lambda, bounds[d].lower_kw, bounds[d].upper_kw);

    // Exact residual assignment to the first device with room in the needed direction.
    double residual = total_kw - powers.sum();
    for (int d = 0; d < n && std::abs(residual) > 0.0; ++d) {
        const double room = residual > 0.0 ? bounds[d].upper_kw - powers(d) : bounds[d].lower_kw - powers(d);
        const double take = residual > 0.0 ? std::min(residual, room) : std::max(residual, room);
        powers(d) += take;
        residual -= take;
    }
    if (std::abs(residual) > 1e-9) throw Error("cave-fill residual exceeds tolerance");
    return powers;
}

AllocationResult distribute_power(const MicrogridSlice& mg, double committed_kw, double pv_used_cap_kw) {
    const FlexInterval agg = aggregate_flex(mg);
    if (!agg.contains(committed_kw, 1e-6))
        throw Error("committed power " + std::to_string(committed_kw) +
                    " kW outside aggregate bounds [" + std::to_string(agg.lower_kw) + ", " +
                    std::to_string(agg.upper_kw) + "]");

    double sum_lo = 0.0, sum_hi = 0.0;
    for (const auto& b : mg.storage_bounds) {
        sum_lo += b.lower_kw;
        sum_hi += b.upper_kw;
    }

    // Power left after the inflexible household load; PV generation raises
    // what the storages must take: remainder + pv_used = sum(storage powers).
    const double remainder = committed_kw - mg.load_kw;
    const double pv_min = std::max(0.0, sum_lo - remainder);
    const double pv_max = std::max(pv_min, std::min(mg.pv_kw, sum_hi - remainder));
    const double pv_used = std::clamp(std::min(pv_used_cap_kw, pv_max), pv_min, pv_max);

    AllocationResult out;
    out.pv_used_kw = pv_used;
    out.pv_curtailed_kw = mg.pv_kw - pv_used;
    out.storage_powers_kw = cave_fill(mg.storage_bounds, remainder + pv_used);
    return out;
}

double update_target(double planned_energy_kwh, double exchanged_energy_kwh, int t, int T, double dt_h) {
    if (t < 1 || t > T) throw Error("slice index out of range in target update");
    const double remaining_h = (T - t + 1) * dt_h;
    return (planned_energy_kwh - exchanged_energy_kwh) / remaining_h;
}

}  // namespace mgsim
