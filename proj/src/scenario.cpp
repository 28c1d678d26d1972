#include "mgsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace mgsim {

using nlohmann::json;

double Profile::energy_kwh(int slot_s) const {
    if (samples_kw.size() < slot_s) throw Error("profile shorter than the slot");
    return samples_kw.head(slot_s).sum() / kSecondsPerHour;
}

Profile normalize_and_scale(const Profile& p, double slot_energy_kwh, int slot_s) {
    Profile out;
    const double energy = p.energy_kwh(slot_s);
    if (slot_energy_kwh == 0.0) {
        out.samples_kw = Eigen::VectorXd::Zero(p.samples_kw.size());
        return out;
    }
    if (energy <= 0.0) throw Error("cannot scale a zero-energy profile to a nonzero target");
    out.samples_kw = p.samples_kw * (slot_energy_kwh / energy);
    return out;
}

Profile apply_realization_factor(const Profile& p, double factor) {
    if (factor <= 0.0) throw Error("realization factor must be positive");
    Profile out;
    out.samples_kw = p.samples_kw * factor;
    return out;
}

Eigen::VectorXd resample_to_slices(const Profile& p, int dt_s, int slot_s) {
    if (dt_s <= 0 || slot_s % dt_s != 0) throw Error("slot length must be divisible by dt");
    if (p.samples_kw.size() < slot_s) throw Error("profile shorter than the slot");
    const int slices = slot_s / dt_s;
    Eigen::VectorXd out(slices);
    for (int t = 0; t < slices; ++t) out(t) = p.samples_kw.segment(t * dt_s, dt_s).mean();
    return out;
}

Profile synthesize_profile(std::uint64_t seed, ProfileKind kind, int slot_s, const SynthOptions& opt) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + (kind == ProfileKind::Pv ? 0x1234 : 0x5678));
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    Profile p;
    p.samples_kw.resize(slot_s);

    const double tilt = 0.8 * (opt.peak_position - 0.5);
    const double phase1 = 2.0 * M_PI * uni(rng);
    const double phase2 = 2.0 * M_PI * uni(rng);
    const double period1 = 240.0 + 240.0 * uni(rng);
    const double period2 = 90.0 + 120.0 * uni(rng);

    for (int t = 0; t < slot_s; ++t) {
        const double s = static_cast<double>(t) / slot_s;
        double v = 1.0 + tilt * (2.0 * s - 1.0);
        v += 0.04 * std::sin(2.0 * M_PI * t / period1 + phase1);
        v += 0.02 * std::sin(2.0 * M_PI * t / period2 + phase2);
        p.samples_kw(t) = v;
    }

    if (kind == ProfileKind::Pv) {
        // Cloud transients: smooth multiplicative dips.
        std::poisson_distribution<int> dip_count(3);
        const int dips = dip_count(rng);
        for (int d = 0; d < dips; ++d) {
            const double center = uni(rng) * slot_s;
            const double width = 20.0 + 60.0 * uni(rng);
            const double depth = 0.10 + 0.15 * uni(rng);
            for (int t = 0; t < slot_s; ++t) {
                const double u = (t - center) / width;
                if (std::abs(u) < 1.0)
                    p.samples_kw(t) *= 1.0 - depth * 0.5 * (1.0 + std::cos(M_PI * u));
            }
        }
        p.samples_kw = p.samples_kw.cwiseMax(0.0);
    } else {
        // Appliance spikes: additive rectangular-ish events with soft edges.
        std::poisson_distribution<int> event_count(6);
        const int events = event_count(rng);
        for (int e = 0; e < events; ++e) {
            const double start = uni(rng) * slot_s;
            const double duration = 10.0 + 50.0 * uni(rng);
            const double height = 0.04 + 0.08 * uni(rng);
            for (int t = 0; t < slot_s; ++t) {
                const double u = (t - start) / duration;
                if (u >= 0.0 && u < 1.0)
                    p.samples_kw(t) += height * std::min(1.0, 4.0 * std::min(u, 1.0 - u));
            }
        }
        p.samples_kw = p.samples_kw.cwiseMax(0.05);
    }
    return p;
}

Profile load_profile_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open profile: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty profile file: " + path);
    if (line.rfind("time_s,power_kw", 0) != 0)
        throw ParseError("profile header must be 'time_s,power_kw': " + path);

    std::vector<double> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("malformed profile row in " + path);
        samples.push_back(std::stod(line.substr(comma + 1)));
    }
    Profile p;
    p.samples_kw = Eigen::Map<Eigen::VectorXd>(samples.data(), samples.size());
    return p;
}

int households_for_load(double pd_kw) {
    return static_cast<int>(std::floor(pd_kw / 0.9 + 1e-9));
}

void Scenario::validate() const {
    if (slot_seconds <= 0 || dt_seconds <= 0) throw Error("slot and dt must be positive");
    const double slices = slot_seconds / dt_seconds;
    if (std::abs(slices - std::round(slices)) > 1e-9)
        throw Error("slot length must be divisible by the slice length");
    for (const auto& mg : microgrids) {
        grid.bus_index(mg.bus_id);
        for (const auto& st : mg.storages) {
            const auto& d = st.device;
            if (d.efficiency <= 0.0 || d.efficiency > 1.0) throw Error("efficiency must be in (0, 1]");
            if (d.energy_kwh < 0 || d.energy_kwh > d.capacity_kwh || d.target_kwh < 0 ||
                d.target_kwh > d.capacity_kwh)
                throw Error("storage energy and target must lie within [0, capacity]");
        }
    }
}

namespace {

json profile_spec_to_json(const ProfileSpec& p) {
    json j;
    if (p.source == ProfileSpec::Source::Synthetic) {
        j["source"] = "synthetic";
        j["seed_offset"] = p.seed_offset;
        j["peak_position"] = p.peak_position;
    } else {
        j["source"] = "csv";
        j["csv_path"] = p.csv_path;
    }
    return j;
}

ProfileSpec profile_spec_from_json(const json& j) {
    ProfileSpec p;
    const std::string source = j.at("source");
    if (source == "synthetic") {
        p.source = ProfileSpec::Source::Synthetic;
        p.seed_offset = j.at("seed_offset");
        p.peak_position = j.at("peak_position");
    } else if (source == "csv") {
        p.source = ProfileSpec::Source::Csv;
        p.csv_path = j.at("csv_path");
    } else {
        throw ParseError("unknown profile source: " + source);
    }
    return p;
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["schema_version"] = s.schema_version;
    j["name"] = s.name;
    j["grid_case_file"] = s.grid_case_file;
    j["dt_seconds"] = s.dt_seconds;
    j["slot_seconds"] = s.slot_seconds;
    j["pv_realization_factor"] = s.pv_realization_factor;
    j["seed"] = s.seed;
    j["offline_cap"] = s.offline_cap;
    j["loss_margin"] = s.loss_margin;
    j["microgrids"] = json::array();
    for (const auto& mg : s.microgrids) {
        json jm;
        jm["bus_id"] = mg.bus_id;
        jm["households"] = mg.households;
        jm["load_slot_energy_kwh"] = mg.load_slot_energy_kwh;
        jm["pv_slot_energy_kwh"] = mg.pv_slot_energy_kwh;
        jm["planned_market_energy_kwh"] = mg.planned_market_energy_kwh;
        jm["load_profile"] = profile_spec_to_json(mg.load_profile);
        jm["pv_profile"] = profile_spec_to_json(mg.pv_profile);
        jm["storages"] = json::array();
        for (const auto& st : mg.storages) {
            json js;
            js["kind"] = st.kind;
            js["capacity_kwh"] = st.device.capacity_kwh;
            js["charge_limit_kw"] = st.device.charge_limit_kw;
            js["discharge_limit_kw"] = st.device.discharge_limit_kw;
            js["efficiency"] = st.device.efficiency;
            js["initial_kwh"] = st.device.energy_kwh;
            js["target_kwh"] = st.device.target_kwh;
            js["available"] = st.device.available;
            jm["storages"].push_back(js);
        }
        j["microgrids"].push_back(jm);
    }
    return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario JSON parse error: ") + e.what());
    }
    Scenario s;
    s.schema_version = j.at("schema_version");
    if (s.schema_version != 1)
        throw ParseError("unsupported scenario schema_version " + std::to_string(s.schema_version));
    s.name = j.at("name");
    s.grid_case_file = j.at("grid_case_file");
    s.dt_seconds = j.at("dt_seconds");
    s.slot_seconds = j.at("slot_seconds");
    s.pv_realization_factor = j.at("pv_realization_factor");
    s.seed = j.at("seed");
    s.offline_cap = j.value("offline_cap", 10000);
    s.loss_margin = j.value("loss_margin", 0.0);
    for (const auto& jm : j.at("microgrids")) {
        MicrogridSpec mg;
        mg.bus_id = jm.at("bus_id");
        mg.households = jm.at("households");
        mg.load_slot_energy_kwh = jm.at("load_slot_energy_kwh");
        mg.pv_slot_energy_kwh = jm.at("pv_slot_energy_kwh");
        mg.planned_market_energy_kwh = jm.at("planned_market_energy_kwh");
        mg.load_profile = profile_spec_from_json(jm.at("load_profile"));
        mg.pv_profile = profile_spec_from_json(jm.at("pv_profile"));
        for (const auto& js : jm.at("storages")) {
            StorageSpec st;
            st.kind = js.at("kind");
            st.device.capacity_kwh = js.at("capacity_kwh");
            st.device.charge_limit_kw = js.at("charge_limit_kw");
            st.device.discharge_limit_kw = js.at("discharge_limit_kw");
            st.device.efficiency = js.at("efficiency");
            st.device.energy_kwh = js.at("initial_kwh");
            st.device.target_kwh = js.at("target_kwh");
            st.device.available = js.at("available");
            mg.storages.push_back(st);
        }
        s.microgrids.push_back(mg);
    }
    materialize(s, base_dir);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return scenario_from_json(buf.str(), std::filesystem::path(path).parent_path().string());
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write scenario: " + path);
    out << scenario_to_json(s);
}

void materialize(Scenario& s, const std::string& base_dir) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        if (fp.is_absolute() || base_dir.empty()) return p;
        return (std::filesystem::path(base_dir) / fp).string();
    };

    s.grid = load_grid_case(resolve(s.grid_case_file));
    s.validate();

    const int slot_s = static_cast<int>(s.slot_seconds);
    s.load_realized.clear();
    s.pv_realized.clear();
    for (std::size_t m = 0; m < s.microgrids.size(); ++m) {
        const auto& mg = s.microgrids[m];
        auto make = [&](const ProfileSpec& spec, ProfileKind kind) {
            if (spec.source == ProfileSpec::Source::Csv)
                return load_profile_csv(resolve(spec.csv_path));
            const std::uint64_t seed =
                s.seed * 1000003ULL + static_cast<std::uint64_t>(mg.bus_id) * 131ULL + spec.seed_offset;
            return synthesize_profile(seed, kind, slot_s, SynthOptions{spec.peak_position});
        };
        Profile load = normalize_and_scale(make(mg.load_profile, ProfileKind::Load),
                                           mg.load_slot_energy_kwh, slot_s);
        Profile pv = normalize_and_scale(make(mg.pv_profile, ProfileKind::Pv),
                                         mg.pv_slot_energy_kwh, slot_s);
        pv = apply_realization_factor(pv, s.pv_realization_factor);
        s.load_realized.push_back(std::move(load));
        s.pv_realized.push_back(std::move(pv));
    }
}

Scenario build_default_scenario(const std::string& grid_case_file, const DefaultScenarioOptions& opt) {
    Scenario s;
    s.name = std::filesystem::path(grid_case_file).stem().string() + "-default";
    s.grid_case_file = grid_case_file;
    s.dt_seconds = opt.dt_seconds;
    s.slot_seconds = opt.slot_seconds;
    s.pv_realization_factor = opt.pv_realization_factor;
    s.seed = opt.seed;

    const GridCase grid = load_grid_case(grid_case_file);
    const double slot_h = opt.slot_seconds / kSecondsPerHour;
    for (int m = 0; m < grid.microgrid_count(); ++m) {
        const Bus& bus = grid.buses[grid.microgrid_buses[m]];
        MicrogridSpec mg;
        mg.bus_id = bus.id;
        mg.households = households_for_load(bus.load_kw);
        mg.load_slot_energy_kwh = bus.load_kw * slot_h;
        mg.pv_slot_energy_kwh = opt.pv_energy_fraction * mg.load_slot_energy_kwh;
        mg.load_profile.seed_offset = 2 * m;
        mg.load_profile.peak_position = opt.load_peak_position;
        mg.pv_profile.seed_offset = 2 * m + 1;
        mg.pv_profile.peak_position = opt.pv_peak_position;

        StorageSpec battery;
        battery.kind = "battery";
        battery.device.capacity_kwh = opt.battery_capacity_kwh;
        battery.device.charge_limit_kw = opt.battery_limit_kw;
        battery.device.discharge_limit_kw = opt.battery_limit_kw;
        battery.device.efficiency = opt.efficiency;
        battery.device.energy_kwh = opt.initial_soc_fraction * opt.battery_capacity_kwh;
        battery.device.target_kwh = battery.device.energy_kwh;
        mg.storages.push_back(battery);

        const int evs = opt.ev_count_override >= 0
                            ? opt.ev_count_override
                            : (mg.households + opt.households_per_ev - 1) / opt.households_per_ev;
        for (int e = 0; e < evs; ++e) {
            StorageSpec ev;
            ev.kind = "ev";
            ev.device.capacity_kwh = opt.ev_capacity_kwh;
            ev.device.charge_limit_kw = opt.ev_limit_kw;
            ev.device.discharge_limit_kw = opt.ev_limit_kw;
            ev.device.efficiency = opt.efficiency;
            ev.device.energy_kwh = opt.initial_soc_fraction * opt.ev_capacity_kwh;
            ev.device.target_kwh = ev.device.energy_kwh;
            mg.storages.push_back(ev);
        }

        // Day-ahead plan: expected net slot energy, with planned storage
        // deltas converted through the efficiency.
        double storage_delta = 0.0;
        for (const auto& st : mg.storages) {
            const double d = st.device.target_kwh - st.device.energy_kwh;
            storage_delta += d > 0 ? d / st.device.efficiency : d * st.device.efficiency;
        }
        mg.planned_market_energy_kwh =
            mg.load_slot_energy_kwh - mg.pv_slot_energy_kwh + storage_delta;

        s.microgrids.push_back(mg);
    }

    materialize(s, "");
    return s;
}

}  // namespace mgsim
