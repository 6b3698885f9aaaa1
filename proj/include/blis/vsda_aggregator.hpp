#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "blis/app_spec.hpp"
#include "blis/common.hpp"
#include "blis/event_log.hpp"
#include "blis/forecaster.hpp"
#include "blis/protocol.hpp"

namespace blis::vsda {

enum class Scheme : std::uint8_t { Vsda, Polling };

const char* to_string(Scheme s);
std::optional<Scheme> parse_scheme(std::string_view s);

/// Receive + Sense + Send: the shortest interval in which one solicited
/// reading can come back.
inline constexpr SimTime kMinBeaconPeriodUs = 58'483 + 12'030 + 52'558;

struct AggregatorConfig {
    Scheme scheme = Scheme::Vsda;
    int reattempt_limit = 3;
    bool keep_alive = true;
    bool skip_lp = true;
    double initial_alpha = 1.0;
    std::size_t alpha_horizon = 100;
    double alpha_recompute_delta = 0.01;
    double min_alpha = 0.01;
    SimTime min_period_us = kMinBeaconPeriodUs;

    void validate() const;
};

struct BeaconPeriod {
    SimTime tau_us = 0;
    bool infeasible = false;  // the bound fell below the floor
};

/// Sum over modules and sensors of the rates assigned for the given states.
std::uint32_t total_rate(const AppSpec& spec, std::span<const DeviceState> states);

/// Per-module reading targets for the given states.
std::vector<std::uint16_t> module_targets(const AppSpec& spec, std::span<const DeviceState> states);

/// tau = alpha * T / total rate, rounded down to whole microseconds and
/// floored at floor_us. Throws InvalidArgument unless alpha is in (0,1].
BeaconPeriod compute_beacon_period(double alpha, SimTime period_us, const AppSpec& spec,
                                   std::span<const DeviceState> states, SimTime floor_us = kMinBeaconPeriodUs);
BeaconPeriod compute_beacon_period(double alpha, SimTime period_us, std::uint32_t total_rate,
                                   SimTime floor_us = kMinBeaconPeriodUs);

struct SyncChoice {
    protocol::SyncVector next;   // V-hat
    std::optional<int> module;   // the solicited module, if any
};

/// Flags the first module (scanning cyclically from `start`) whose count is
/// below its target. When `eligible` is given, eligible modules are preferred
/// and the others are only considered if no eligible module is unmet.
SyncChoice set_sync_vector(const protocol::SyncVector& current, std::span<const std::uint16_t> targets,
                           std::size_t start = 0, std::span<const bool> eligible = {});

/// What the aggregator last heard from a module.
struct ModuleReport {
    bool known = false;
    DeviceState state = DeviceState::LowPower;
    double energy_j = 0.0;
    SimTime time_us = 0;
};

class StateEstimator {
public:
    virtual ~StateEstimator() = default;
    /// Predicted device state of (app, module) at `now`; horizon_us is the
    /// beacon interval about to start.
    virtual DeviceState estimate(std::size_t app_index, int module, SimTime now, SimTime horizon_us,
                                 const ModuleReport& last) = 0;
};

struct Solicitation {
    std::uint32_t seq = 0;
    int module = 0;
    std::uint16_t count = 0;  // V-hat value being asked for
    SimTime first_emit_us = 0;
    SimTime last_emit_us = 0;
    int attempts = 0;  // resends after the first emission
    DeviceState predicted = DeviceState::Normal;
};

struct AppCounters {
    std::uint64_t beacons = 0;
    std::uint64_t solicitations = 0;
    std::uint64_t reattempts = 0;
    std::uint64_t answered = 0;
    std::uint64_t lost = 0;
    std::uint64_t stale = 0;
    std::uint64_t abandoned = 0;  // still pending when the period rolled over
    std::uint64_t infeasible_periods = 0;
};

struct AppState {
    AppSpec spec;
    protocol::SyncVector current;  // V
    protocol::SyncVector next;     // V-hat
    std::vector<DeviceState> known;      // D
    std::vector<DeviceState> estimated;  // D-hat
    std::vector<ModuleReport> reports;
    std::vector<std::uint16_t> targets;
    std::vector<std::uint16_t> rates_current;  // per sensor, as last broadcast
    forecast::AlphaTracker alpha;
    double alpha_used = 1.0;  // alpha behind the current tau
    BeaconPeriod tau;
    std::uint32_t next_seq = 0;
    std::size_t scan_start = 0;
    std::uint64_t period_index = 0;
    std::optional<protocol::ActuatorControlMsg> queued_actuator;
    // VSDA keeps at most one outstanding solicitation; polling keeps one per module.
    std::map<int, Solicitation> pending;
    std::map<std::uint32_t, int> seq_to_module;
    std::size_t round_robin = 0;
    bool infeasible_flagged = false;
    AppCounters counters;
};

enum class ReplyOutcome : std::uint8_t { Accepted, Stale };

struct ReplyResult {
    ReplyOutcome outcome = ReplyOutcome::Stale;
    double delay_s = 0.0;
};

/// The always-on aggregator: one AppState per application, each on its own
/// channel. Beacons solicit at most one reading through the sync vectors.
class Aggregator {
public:
    Aggregator(std::vector<AppSpec> apps, AggregatorConfig config, StateEstimator* estimator = nullptr,
               EventLog* log = nullptr);

    const AggregatorConfig& config() const { return config_; }
    std::size_t app_count() const { return apps_.size(); }
    const AppState& app(std::size_t i) const { return apps_.at(i); }
    std::optional<std::size_t> app_index(int app_id) const;

    /// Builds the beacon for this instant: resend of an unanswered
    /// solicitation, a new solicitation, or a keep-alive. Returns nullopt when
    /// keep-alives are off and nothing needs soliciting.
    std::optional<protocol::Beacon> emit_beacon(std::size_t app_index, SimTime now);

    /// Interval to the next beacon of this app.
    SimTime beacon_interval(std::size_t app_index) const { return apps_.at(app_index).tau.tau_us; }

    ReplyResult on_sensor_data(const protocol::SensorDataPacket& packet, SimTime now);

    /// Period boundary: pending solicitations are abandoned and V, V-hat reset.
    void on_period_rollover(std::size_t app_index, SimTime now);

    void queue_actuator(std::size_t app_index, protocol::ActuatorControlMsg msg);

    /// Test hook: overrides the rolling accuracy used for tau.
    void set_alpha(std::size_t app_index, double alpha);

private:
    void estimate_states(AppState& a, std::size_t index, SimTime now);
    void refresh_period(AppState& a, SimTime now);
    void mark_lost(AppState& a, const Solicitation& s, SimTime now, const char* reason);
    std::optional<protocol::Beacon> emit_vsda(AppState& a, std::size_t index, SimTime now);
    std::optional<protocol::Beacon> emit_polling(AppState& a, SimTime now);
    protocol::Beacon build_beacon(AppState& a, std::uint32_t seq, const protocol::SyncVector& next);
    std::uint32_t allocate_seq(AppState& a);
    void log(SimTime t, const AppState& a, const char* event, std::string detail) const;

    std::vector<AppState> apps_;
    AggregatorConfig config_;
    StateEstimator* estimator_;
    EventLog* log_;
};

}  // namespace blis::vsda
