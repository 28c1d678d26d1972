#include <doctest.h>

#include <random>

#include "mgsim/devices.hpp"

using namespace mgsim;

namespace {

Storage paper_battery() {
    Storage s;
    s.capacity_kwh = 42.0;
    s.charge_limit_kw = 15.0;
    s.discharge_limit_kw = 15.0;
    s.efficiency = 0.95;
    s.energy_kwh = 20.0;
    s.target_kwh = 20.0;
    return s;
}

constexpr double kDt15s = 15.0 / 3600.0;

}  // namespace

TEST_CASE("storage_flex_bounds: mid-slot band with ten slices left") {
    // dt = 15 s, 10 slices remaining: the power limits bind on both sides.
    const Storage s = paper_battery();
    const FlexInterval iv = storage_flex_bounds(s, 50, 60, kDt15s);
    CHECK(iv.lower_kw == doctest::Approx(-0.95 * 15.0));          // -14.25
    CHECK(iv.upper_kw == doctest::Approx(15.0 / 0.95));           // 15.789...
}

TEST_CASE("storage_flex_bounds: last slice with target met pins to zero") {
    const Storage s = paper_battery();
    const FlexInterval iv = storage_flex_bounds(s, 60, 60, kDt15s);
    CHECK(iv.lower_kw == doctest::Approx(0.0));
    CHECK(iv.upper_kw == doctest::Approx(0.0));
}

TEST_CASE("storage_flex_bounds: unavailable EV has no flexibility") {
    Storage s = paper_battery();
    s.available = false;
    s.energy_kwh = 5.0;  // even away from the target
    const FlexInterval iv = storage_flex_bounds(s, 3, 60, kDt15s);
    CHECK(iv.lower_kw == 0.0);
    CHECK(iv.upper_kw == 0.0);
}

TEST_CASE("storage_flex_bounds: forced final charge is exactly reachable") {
    Storage s = paper_battery();
    s.energy_kwh = 19.95;  // 0.05 kWh short at the last slice (12 kW internal)
    const FlexInterval iv = storage_flex_bounds(s, 60, 60, kDt15s);
    CHECK(iv.lower_kw == doctest::Approx(iv.upper_kw));
    CHECK(iv.lower_kw > 0.0);
    const Storage after = apply_dispatch(s, iv.upper_kw, kDt15s);
    CHECK(after.energy_kwh == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("storage_flex_bounds: forced final discharge is exactly reachable") {
    Storage s = paper_battery();
    s.energy_kwh = 20.05;
    const FlexInterval iv = storage_flex_bounds(s, 60, 60, kDt15s);
    CHECK(iv.lower_kw == doctest::Approx(iv.upper_kw));
    CHECK(iv.upper_kw < 0.0);
    const Storage after = apply_dispatch(s, iv.lower_kw, kDt15s);
    CHECK(after.energy_kwh == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("storage_flex_bounds: unreachable target raises") {
    Storage s = paper_battery();
    s.energy_kwh = 0.0;
    s.target_kwh = 42.0;  // cannot charge 42 kWh in one 15 s slice
    CHECK_THROWS_AS(storage_flex_bounds(s, 60, 60, kDt15s), InfeasibleTarget);
}

TEST_CASE("storage_flex_bounds: monotone tightening toward the slot end") {
    const Storage s = paper_battery();
    FlexInterval prev = storage_flex_bounds(s, 1, 60, kDt15s);
    for (int t = 2; t <= 60; ++t) {
        const FlexInterval iv = storage_flex_bounds(s, t, 60, kDt15s);
        CHECK(iv.lower_kw >= prev.lower_kw - 1e-12);
        CHECK(iv.upper_kw <= prev.upper_kw + 1e-12);
        prev = iv;
    }
}

TEST_CASE("storage_flex_bounds: greedy extreme dispatch reaches the target") {
    // Dispatching the relevant bound every slice keeps the target reachable
    // and ends exactly on it (backlog correctness).
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Storage s = paper_battery();
        s.energy_kwh = 5.0 + 30.0 * uni(rng);
        // Stay inside the 40-slice charge/discharge capability of 2.5 kWh.
        s.target_kwh = s.energy_kwh + 4.0 * (uni(rng) - 0.5);
        const int T = 40;
        const bool ride_upper = trial % 2 == 0;
        for (int t = 1; t <= T; ++t) {
            const FlexInterval iv = storage_flex_bounds(s, t, T, kDt15s);
            s = apply_dispatch(s, ride_upper ? iv.upper_kw : iv.lower_kw, kDt15s);
            CHECK(s.energy_kwh >= -1e-9);
            CHECK(s.energy_kwh <= s.capacity_kwh + 1e-9);
        }
        CHECK(s.energy_kwh == doctest::Approx(s.target_kwh).epsilon(1e-9));
    }
}

TEST_CASE("storage_flex_bounds: any in-band dispatch keeps the slot feasible") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Storage s = paper_battery();
        s.energy_kwh = 10.0 + 20.0 * uni(rng);
        s.target_kwh = s.energy_kwh + (uni(rng) - 0.5) * 0.4;
        const int T = 30;
        for (int t = 1; t <= T; ++t) {
            const FlexInterval iv = storage_flex_bounds(s, t, T, kDt15s);
            const double power = iv.lower_kw + uni(rng) * (iv.upper_kw - iv.lower_kw);
            s = apply_dispatch(s, power, kDt15s);
        }
        CHECK(s.energy_kwh == doctest::Approx(s.target_kwh).epsilon(1e-9));
    }
}

TEST_CASE("aggregate_flex: no devices leaves only the PV band") {
    const FlexInterval iv = aggregate_flex(5.0, 3.0, {});
    CHECK(iv.lower_kw == doctest::Approx(2.0));
    CHECK(iv.upper_kw == doctest::Approx(5.0));
}

TEST_CASE("aggregate_flex: storage bands add to the load band") {
    const std::vector<FlexInterval> bounds{{-14.25, 15.0 / 0.95}};
    const FlexInterval iv = aggregate_flex(10.0, 0.0, bounds);
    CHECK(iv.lower_kw == doctest::Approx(-4.25));
    CHECK(iv.upper_kw == doctest::Approx(10.0 + 15.0 / 0.95));
}

TEST_CASE("aggregate_flex: bare load is inflexible") {
    const FlexInterval iv = aggregate_flex(7.5, 0.0, {});
    CHECK(iv.lower_kw == doctest::Approx(7.5));
    CHECK(iv.upper_kw == doctest::Approx(7.5));
}

TEST_CASE("apply_dispatch: idle leaves the state untouched") {
    const Storage s = paper_battery();
    CHECK(apply_dispatch(s, 0.0, kDt15s).energy_kwh == doctest::Approx(20.0));
}

TEST_CASE("apply_dispatch: charging applies the efficiency") {
    const Storage s = paper_battery();
    const Storage after = apply_dispatch(s, 15.0, 1.0 / 240.0);
    CHECK(after.energy_kwh - s.energy_kwh == doctest::Approx(0.95 * 15.0 / 240.0));
}

TEST_CASE("apply_dispatch: round trips lose energy") {
    Storage s = paper_battery();
    s = apply_dispatch(s, 10.0, kDt15s);
    s = apply_dispatch(s, -10.0, kDt15s);
    CHECK(s.energy_kwh < 20.0 - 1e-6);
}

TEST_CASE("apply_dispatch: power limit violations are rejected") {
    const Storage s = paper_battery();
    CHECK_THROWS_AS(apply_dispatch(s, 40.0, kDt15s), Error);
    CHECK_THROWS_AS(apply_dispatch(s, -40.0, kDt15s), Error);
}
