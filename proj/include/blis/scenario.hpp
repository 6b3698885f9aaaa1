#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "blis/app_spec.hpp"
#include "blis/atem_device.hpp"
#include "blis/energy_model.hpp"
#include "blis/forecaster.hpp"
#include "blis/vsda_aggregator.hpp"

namespace blis::sim {

enum class LpMode : std::uint8_t { Scale, Clamp };
enum class TraceKind : std::uint8_t { Constant, Sinusoid, Intermittent, Csv };
enum class EstimatorKind : std::uint8_t { Oracle, Forecast };

struct TraceSpec {
    TraceKind kind = TraceKind::Intermittent;
    double interval_s = 1.0;
    double power_mw = 1.0;      // constant
    double mean_mw = 1.0;       // sinusoid
    double amplitude_mw = 0.5;  // sinusoid
    double period_s = 600.0;    // sinusoid
    energy::IntermittentTraceConfig intermittent;
    std::filesystem::path path;  // csv, resolved against the config file's directory
};

struct ForcedOff {
    int app_id = 1;
    int module = 0;
    double from_s = 0.0;
    double to_s = 0.0;
};

struct StateClamp {
    int app_id = 1;
    int module = 0;
    DeviceState state = DeviceState::LowPower;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    double duration_s = 7200.0;
    double slot_s = 0.01;
    double period_s = 3600.0;
    double lp_fraction = 0.0;
    LpMode lp_mode = LpMode::Scale;
    double lp_target_fraction = 0.5;   // LP steady-state energy as a fraction of E_th
    double nml_target_fraction = 2.0;  // minimum NML steady-state energy, same units
    std::vector<AppSpec> apps;
    TraceSpec trace;
    atem::DeviceConfig device;
    double initial_charge = 0.0;
    vsda::AggregatorConfig aggregator;
    EstimatorKind estimator = EstimatorKind::Forecast;
    forecast::ModelKind forecaster = forecast::ModelKind::Ewma;
    double ewma_beta = 0.5;
    forecast::LstmConfig lstm;
    std::size_t lstm_max_samples = 2000;
    SimTime propagation_delay_us = 0;
    int actuator_every_n_beacons = 0;
    std::vector<ForcedOff> forced_off;
    std::vector<StateClamp> clamps;

    SimTime duration_us() const { return from_seconds(duration_s); }
    SimTime slot_us() const { return from_seconds(slot_s); }
    SimTime period_us() const { return from_seconds(period_s); }
    std::size_t device_count() const;
    /// Throws Error(ConfigError) naming the offending field.
    void validate() const;
};

/// Table 1 applications: (modules, NML rate, LP rate) = (2,10,5), (4,16,8), (5,20,10).
std::vector<AppSpec> table1_apps(double period_s = 3600.0);

/// Parses the documented scenario schema; relative trace paths are resolved
/// against base_dir. Throws Error(ConfigError) with the JSON field path.
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const ScenarioConfig& c);

const char* to_string(LpMode m);
const char* to_string(TraceKind k);
const char* to_string(EstimatorKind k);

}  // namespace blis::sim
