#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "blis/atem_device.hpp"
#include "blis/event_log.hpp"
#include "blis/scenario.hpp"
#include "blis/vsda_aggregator.hpp"

namespace blis::metrics {

inline constexpr int kSchemaVersion = 1;

struct ComponentMetrics {
    double availability = 0.0;
    std::optional<double> initial_time_s;  // empty: never available

    friend bool operator==(const ComponentMetrics&, const ComponentMetrics&) = default;
};

struct DeviceMetrics {
    std::string entity;
    ComponentMetrics sense;
    ComponentMetrics radio;

    friend bool operator==(const DeviceMetrics&, const DeviceMetrics&) = default;
};

struct AppMetrics {
    int app_id = 0;
    std::uint64_t beacons = 0;
    std::uint64_t solicited = 0;
    std::uint64_t reattempts = 0;
    std::uint64_t answered = 0;
    std::uint64_t lost = 0;
    std::uint64_t stale = 0;
    std::uint64_t abandoned = 0;
    double data_loss = 0.0;
    double mean_delay_s = 0.0;
    std::vector<std::uint64_t> achieved_rate;  // readings received per completed period
    std::vector<std::uint64_t> target_rate;    // per completed period, from the period records

    friend bool operator==(const AppMetrics&, const AppMetrics&) = default;
};

struct MetricsBundle {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string strategy;
    std::string scheme;
    double duration_s = 0.0;

    double data_loss = 0.0;
    double mean_packet_delay_s = 0.0;
    double availability = 0.0;  // mean over devices and components
    double availability_sense = 0.0;
    double availability_radio = 0.0;
    // Means over devices; components never available count as the duration.
    double available_initial_time_s = 0.0;
    double available_initial_time_sense_s = 0.0;
    double available_initial_time_radio_s = 0.0;
    std::uint64_t never_available = 0;

    std::uint64_t beacons = 0;
    std::uint64_t solicited = 0;
    std::uint64_t reattempts = 0;
    std::uint64_t answered = 0;
    std::uint64_t lost = 0;
    std::uint64_t stale = 0;
    std::uint64_t abandoned = 0;

    std::vector<AppMetrics> apps;
    std::vector<DeviceMetrics> devices;

    friend bool operator==(const MetricsBundle&, const MetricsBundle&) = default;
};

/// Derives the metrics from a complete EventLog. Throws Error(MalformedLog)
/// naming the offending record.
MetricsBundle compute_metrics(const EventLog& log);

nlohmann::json to_json(const MetricsBundle& m);
MetricsBundle metrics_from_json(const nlohmann::json& j);

/// Strategy pair such as "atem/vsda" or "central/polling".
struct Variant {
    std::string label;
    atem::EnergyStrategy strategy = atem::EnergyStrategy::Atem;
    vsda::Scheme scheme = vsda::Scheme::Vsda;

    friend bool operator==(const Variant&, const Variant&) = default;
};

Variant parse_variant(std::string_view text);

struct RunRow {
    std::string scenario;
    std::string variant;
    std::uint64_t seed = 0;
    MetricsBundle metrics;

    friend bool operator==(const RunRow&, const RunRow&) = default;
};

struct DeltaStats {
    std::string metric;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double mean_relative_pct = 0.0;  // mean of (candidate - baseline) / baseline, in percent
    std::size_t pairs = 0;

    friend bool operator==(const DeltaStats&, const DeltaStats&) = default;
};

struct VariantDelta {
    std::string scenario;
    std::string variant;
    std::string baseline;
    std::vector<DeltaStats> deltas;

    friend bool operator==(const VariantDelta&, const VariantDelta&) = default;
};

struct ReferenceTargets {
    double availability_gain_pct = 15.28;
    double initial_time_gain_s = 22.4;
    double data_loss_reduction_pct = 99.04;
    double delay_reduction_pct = 94.96;
    double alpha_outdoor = 0.98;
    double alpha_mobile = 0.99;
    double forecast_rmse_mw = 2.473;

    friend bool operator==(const ReferenceTargets&, const ReferenceTargets&) = default;
};

struct ComparisonReport {
    std::vector<RunRow> rows;
    std::vector<VariantDelta> deltas;
    ReferenceTargets reference;

    friend bool operator==(const ComparisonReport&, const ComparisonReport&) = default;
};

/// Metrics whose paired deltas are reported.
const std::vector<std::string>& delta_metrics();
double metric_value(const MetricsBundle& m, std::string_view metric);

/// Computes per-(scenario, variant) deltas against `baseline` on identical seeds.
std::vector<VariantDelta> paired_deltas(const std::vector<RunRow>& rows, const std::string& baseline);

/// Runs every (config, variant, seed) combination, at most `threads` at a time
/// (0 reads BLIS_SIM_THREADS, falling back to the hardware concurrency).
ComparisonReport compare(const std::vector<sim::ScenarioConfig>& configs, const std::vector<Variant>& variants,
                         const std::vector<std::uint64_t>& seeds, const std::string& baseline, unsigned threads = 0);

unsigned thread_budget();

nlohmann::json to_json(const ComparisonReport& r);
ComparisonReport report_from_json(const nlohmann::json& j);

enum class Format : std::uint8_t { Csv, Json };

/// Writes runs.csv, apps.csv, devices.csv and deltas.csv (or report.json),
/// plus one SVG per headline metric when plots is set. Throws IoError.
std::vector<std::filesystem::path> emit_outputs(const ComparisonReport& report, Format format,
                                                const std::filesystem::path& out_dir, bool plots = false);

std::string runs_csv_header();

}  // namespace blis::metrics
