#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgsim/devices.hpp"
#include "mgsim/grid.hpp"

namespace mgsim {

/// A power profile sampled at 1 Hz, in kW.
struct Profile {
    Eigen::VectorXd samples_kw;

    /// Energy of the first `slot_s` samples, kWh.
    double energy_kwh(int slot_s) const;
};

/// Scale a profile so its slot energy equals `slot_energy_kwh` exactly.
Profile normalize_and_scale(const Profile& p, double slot_energy_kwh, int slot_s);

/// Pointwise realization factor (> 1: the day-ahead forecast underestimated).
Profile apply_realization_factor(const Profile& p, double factor);

/// Per-slice averages over dt-second windows covering the slot.
Eigen::VectorXd resample_to_slices(const Profile& p, int dt_s, int slot_s);

enum class ProfileKind { Pv, Load };

struct SynthOptions {
    double peak_position = 0.5;  ///< 0 = peak at slot start, 1 = at slot end
};

/// Deterministic synthetic 1 Hz profile. PV profiles are a slowly drifting
/// plateau with smooth cloud-transient dips (nonnegative); load profiles are
/// a drifting base with Poisson-arriving appliance spikes.
Profile synthesize_profile(std::uint64_t seed, ProfileKind kind, int slot_s, const SynthOptions& opt = {});

/// Read a 1 Hz profile from CSV with the header `time_s,power_kw`.
Profile load_profile_csv(const std::string& path);

/// How a microgrid profile is sourced in a scenario file.
struct ProfileSpec {
    enum class Source { Synthetic, Csv };
    Source source = Source::Synthetic;
    std::uint64_t seed_offset = 0;
    double peak_position = 0.5;
    std::string csv_path;
};

struct StorageSpec {
    std::string kind = "battery";  ///< battery | ev
    Storage device;
};

struct MicrogridSpec {
    int bus_id = 0;
    int households = 0;
    double load_slot_energy_kwh = 0.0;  ///< day-ahead expected load energy
    double pv_slot_energy_kwh = 0.0;    ///< day-ahead expected PV energy
    double planned_market_energy_kwh = 0.0;
    ProfileSpec load_profile;
    ProfileSpec pv_profile;
    std::vector<StorageSpec> storages;
};

/// A fully specified single-slot experiment: the grid, the microgrid fleet
/// and plans, and the realized 1 Hz profiles (materialized deterministically
/// from the specs). Immutable once materialized; shareable across threads.
struct Scenario {
    int schema_version = 1;
    std::string name;
    std::string grid_case_file;
    double dt_seconds = 15.0;
    double slot_seconds = 900.0;
    double pv_realization_factor = 1.0;
    std::uint64_t seed = 1;
    int offline_cap = 10000;      ///< refuse the offline model beyond mgs x slices
    double loss_margin = 0.0;     ///< optional inflation of the desired exchange level
    std::vector<MicrogridSpec> microgrids;

    GridCase grid;                       ///< materialized
    std::vector<Profile> load_realized;  ///< per microgrid, 1 Hz
    std::vector<Profile> pv_realized;

    int slice_count() const { return static_cast<int>(slot_seconds / dt_seconds + 0.5); }
    double dt_hours() const { return dt_seconds / kSecondsPerHour; }
    int microgrid_count() const { return static_cast<int>(microgrids.size()); }

    void validate() const;
};

/// Microgrid size from the bus load at 0.9 kW peak-average per household.
int households_for_load(double pd_kw);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text, const std::string& base_dir);
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

/// Resolve the grid and generate/normalize the realized profiles. Called by
/// load_scenario and build_default_scenario.
void materialize(Scenario& s, const std::string& base_dir);

struct DefaultScenarioOptions {
    double dt_seconds = 15.0;
    double slot_seconds = 900.0;
    std::uint64_t seed = 1;
    double pv_realization_factor = 1.0;
    double pv_energy_fraction = 0.6;   ///< PV slot energy as a fraction of load energy
    int households_per_ev = 10;        ///< one EV per this many households (ceil)
    int ev_count_override = -1;        ///< fixed EV count per microgrid, -1 = derive
    double battery_capacity_kwh = 42.0;
    double battery_limit_kw = 15.0;
    double ev_capacity_kwh = 58.0;
    double ev_limit_kw = 11.0;
    double efficiency = 0.95;
    double initial_soc_fraction = 0.5;
    double pv_peak_position = 0.35;  ///< default archetype: PV peaks early,
    double load_peak_position = 0.65; ///< load peaks late; swap for the reverse
};

/// Build a scenario with the default per-microgrid fleet (one communal
/// battery plus EVs derived from the household count) and synthetic profiles
/// sized from the grid's bus loads.
Scenario build_default_scenario(const std::string& grid_case_file, const DefaultScenarioOptions& opt = {});

}  // namespace mgsim
