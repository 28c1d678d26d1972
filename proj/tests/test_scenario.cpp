#include <doctest.h>

#include <filesystem>

#include "mgsim/scenario.hpp"

using namespace mgsim;

namespace {
const std::string kDataDir = MGSIM_DATA_DIR;
const std::string kCase9 = kDataDir + "/grids/case9.case";
}  // namespace

TEST_CASE("normalize_and_scale: flat profile scales to the target energy") {
    Profile p;
    p.samples_kw = Eigen::VectorXd::Constant(900, 1.0);
    const Profile scaled = normalize_and_scale(p, 0.5, 900);
    CHECK(scaled.samples_kw(0) == doctest::Approx(2.0));
    CHECK(scaled.energy_kwh(900) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalize_and_scale: zero target zeroes the profile") {
    Profile p;
    p.samples_kw = Eigen::VectorXd::Constant(900, 3.0);
    const Profile scaled = normalize_and_scale(p, 0.0, 900);
    CHECK(scaled.samples_kw.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalize_and_scale: zero-energy profile with nonzero target fails") {
    Profile p;
    p.samples_kw = Eigen::VectorXd::Zero(900);
    CHECK_THROWS_AS(normalize_and_scale(p, 1.0, 900), Error);
}

TEST_CASE("normalize_and_scale: scaled energy hits the target on synthetic input") {
    const Profile p = synthesize_profile(99, ProfileKind::Load, 900);
    const Profile scaled = normalize_and_scale(p, 22.5, 900);
    CHECK(scaled.energy_kwh(900) == doctest::Approx(22.5).epsilon(1e-9));
}

TEST_CASE("apply_realization_factor: identity and scaling") {
    Profile p = synthesize_profile(1, ProfileKind::Pv, 900);
    p = normalize_and_scale(p, 10.0, 900);
    CHECK(apply_realization_factor(p, 1.0).energy_kwh(900) == doctest::Approx(10.0));
    CHECK(apply_realization_factor(p, 1.4).energy_kwh(900) == doctest::Approx(14.0));
    CHECK(apply_realization_factor(p, 1.03).energy_kwh(900) == doctest::Approx(10.3));
}

TEST_CASE("resample_to_slices: averaging conserves energy") {
    const Profile p = synthesize_profile(7, ProfileKind::Load, 900);
    for (int dt : {1, 5, 15, 60}) {
        const Eigen::VectorXd slices = resample_to_slices(p, dt, 900);
        const double energy = slices.sum() * dt / 3600.0;
        CHECK(energy == doctest::Approx(p.energy_kwh(900)).epsilon(1e-9));
    }
}

TEST_CASE("synthesize_profile: deterministic per seed, nonnegative PV") {
    const Profile a = synthesize_profile(42, ProfileKind::Pv, 900);
    const Profile b = synthesize_profile(42, ProfileKind::Pv, 900);
    CHECK(a.samples_kw == b.samples_kw);
    CHECK(a.samples_kw.minCoeff() >= 0.0);

    const Profile c = synthesize_profile(43, ProfileKind::Pv, 900);
    CHECK(a.samples_kw != c.samples_kw);
}

TEST_CASE("synthesize_profile: peak position tilts the shape") {
    SynthOptions early{0.2}, late{0.8};
    const Profile pe = synthesize_profile(5, ProfileKind::Pv, 900, early);
    const Profile pl = synthesize_profile(5, ProfileKind::Pv, 900, late);
    const double first_half_e = pe.samples_kw.head(450).sum() / pe.samples_kw.sum();
    const double first_half_l = pl.samples_kw.head(450).sum() / pl.samples_kw.sum();
    CHECK(first_half_e > first_half_l);
}

TEST_CASE("households_for_load: case9 totals 349") {
    const GridCase g = load_grid_case(kCase9);
    int total = 0;
    for (int b : g.microgrid_buses) total += households_for_load(g.buses[b].load_kw);
    CHECK(total == 349);
    CHECK(households_for_load(90.0) == 100);
    CHECK(households_for_load(100.0) == 111);
    CHECK(households_for_load(125.0) == 138);
}

TEST_CASE("build_default_scenario: case9 fleet follows the household rule") {
    DefaultScenarioOptions opt;
    const Scenario s = build_default_scenario(kCase9, opt);
    REQUIRE(s.microgrid_count() == 3);
    CHECK(s.slice_count() == 60);
    // one battery plus ceil(households/10) EVs
    CHECK(static_cast<int>(s.microgrids[0].storages.size()) == 1 + 10);
    CHECK(static_cast<int>(s.microgrids[1].storages.size()) == 1 + 12);
    CHECK(static_cast<int>(s.microgrids[2].storages.size()) == 1 + 14);
    CHECK(s.microgrids[0].storages[0].device.capacity_kwh == doctest::Approx(42.0));
    CHECK(s.microgrids[0].storages[1].device.capacity_kwh == doctest::Approx(58.0));
    // balanced plan: load minus PV, no storage delta
    CHECK(s.microgrids[0].planned_market_energy_kwh ==
          doctest::Approx(s.microgrids[0].load_slot_energy_kwh - s.microgrids[0].pv_slot_energy_kwh));
}

TEST_CASE("scenario round-trip: serialize, parse, serialize is byte-identical") {
    DefaultScenarioOptions opt;
    opt.ev_count_override = 2;
    const Scenario s = build_default_scenario(kCase9, opt);
    const std::string once = scenario_to_json(s);
    const Scenario parsed = scenario_from_json(once, kDataDir + "/grids");
    CHECK(scenario_to_json(parsed) == once);
}

TEST_CASE("scenario load/save through files") {
    DefaultScenarioOptions opt;
    opt.ev_count_override = 1;
    Scenario s = build_default_scenario(kCase9, opt);
    const std::string path = (std::filesystem::temp_directory_path() / "mgsim_scn.json").string();
    save_scenario(s, path);
    const Scenario loaded = load_scenario(path);
    CHECK(loaded.microgrid_count() == 3);
    CHECK(loaded.load_realized[0].samples_kw == s.load_realized[0].samples_kw);
    std::filesystem::remove(path);
}

TEST_CASE("materialize: realized PV carries the realization factor") {
    DefaultScenarioOptions opt;
    opt.pv_realization_factor = 1.4;
    opt.ev_count_override = 0;
    const Scenario s = build_default_scenario(kCase9, opt);
    const double expected = 1.4 * s.microgrids[0].pv_slot_energy_kwh;
    CHECK(s.pv_realized[0].energy_kwh(900) == doctest::Approx(expected).epsilon(1e-9));
    // the plan itself stays at the forecast
    CHECK(s.microgrids[0].planned_market_energy_kwh ==
          doctest::Approx(s.microgrids[0].load_slot_energy_kwh - s.microgrids[0].pv_slot_energy_kwh));
}
