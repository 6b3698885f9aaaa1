#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blis/app_spec.hpp"
#include "blis/common.hpp"
#include "blis/energy_model.hpp"
#include "blis/event_log.hpp"
#include "blis/protocol.hpp"

namespace blis::atem {

using protocol::DeviceState;

enum class TaskKind : std::uint8_t { Receive, Sense, Transmit, Control, Log };
inline constexpr std::array<TaskKind, 5> kAllTasks = {TaskKind::Receive, TaskKind::Sense, TaskKind::Transmit,
                                                      TaskKind::Control, TaskKind::Log};

enum class TaskState : std::uint8_t { Ready, Running, Blocked, Suspended };

const char* to_string(TaskKind k);
const char* to_string(TaskState s);
std::optional<TaskKind> parse_task_kind(std::string_view s);
std::optional<TaskState> parse_task_state(std::string_view s);

/// Edges of the task state diagram. Suspended is the idle/completed state.
bool is_legal_transition(TaskState from, TaskState to);

struct TaskCost {
    SimTime duration_us = 0;
    double energy_j = 0.0;
};

struct TaskCostTable {
    // Measured worst-case costs for the radio and sensing tasks; Control and
    // Log have no published figures and use configurable assumptions.
    TaskCost receive{58'483, 92.931e-6};
    TaskCost sense{12'030, 19.066e-6};
    TaskCost transmit{52'558, 67.891e-6};
    TaskCost control{12'030, 19.066e-6};
    TaskCost log{5'000, 5.0e-6};

    const TaskCost& operator[](TaskKind k) const;
    TaskCost& operator[](TaskKind k);
    /// Receive + Sense + Transmit.
    double cycle_energy_j() const { return receive.energy_j + sense.energy_j + transmit.energy_j; }
    SimTime cycle_duration_us() const { return receive.duration_us + sense.duration_us + transmit.duration_us; }
    void validate() const;
};

struct ManagerCost {
    double duration_s = 0.0;
    double energy_j = 0.0;
};

struct AtemOverheadTable {
    ManagerCost task_manager{0.379e-6, 0.493e-9};
    ManagerCost energy_manager{0.198e-6, 0.217e-9};
    ManagerCost overall{0.582e-6, 0.782e-9};
};

enum class EnergyStrategy : std::uint8_t { Atem, FederatedFixed, Central };

const char* to_string(EnergyStrategy s);
std::optional<EnergyStrategy> parse_energy_strategy(std::string_view s);

DeviceState select_device_state(double energy_j, double threshold_j);

/// Per-sensor acquisition rates of one module for the given device state.
std::vector<std::uint16_t> assign_rates(const AppSpec& spec, int module, DeviceState state);

struct DeviceConfig {
    EnergyStrategy strategy = EnergyStrategy::Atem;
    energy::FederatedStore store = default_store();
    TaskCostTable costs;
    AtemOverheadTable overhead;
    double energy_threshold_j = 0.0;  // <= 0 selects 2x one receive-sense-send cycle
    std::optional<DeviceState> clamp_state;

    static energy::FederatedStore default_store();
    double threshold_j() const { return energy_threshold_j > 0.0 ? energy_threshold_j : 2.0 * costs.cycle_energy_j(); }
    void validate() const;
};

struct DeviceIds {
    int app_id = 1;
    int module = 0;  // zero-based index inside the application
    std::string entity() const;
};

/// Running totals used by the conservation audit.
struct EnergyLedger {
    double initial_j = 0.0;
    double harvested_j = 0.0;
    double leaked_j = 0.0;
    double spilled_j = 0.0;
    double task_j = 0.0;
    double overhead_j = 0.0;
    std::uint64_t manager_invocations = 0;
    std::uint64_t tasks_executed = 0;

    double expected_j() const { return initial_j + harvested_j - leaked_j - spilled_j - task_j - overhead_j; }
};

struct TaskExecution {
    SimTime completion_us = 0;
    double energy_drawn_j = 0.0;
};

struct TaskStart {
    TaskKind kind;
    SimTime completion_us;
};

struct DeviceStep {
    std::optional<TaskStart> started;
    std::optional<protocol::SensorDataPacket> outgoing;
};

/// Battery-less module runtime: device-state selection, rate assignment,
/// task-state management and the federated (or baseline) energy store.
///
/// Driven by the simulation engine through on_beacon_window, deliver_beacon,
/// on_task_complete and on_energy_slot. At most one task runs at a time; a
/// task only starts when its backing buffer holds more usable energy than the
/// task costs.
class DeviceRuntime {
public:
    DeviceRuntime(DeviceIds ids, AppSpec app, DeviceConfig config, EventLog* log = nullptr);

    const DeviceIds& ids() const { return ids_; }
    const DeviceConfig& config() const { return config_; }
    DeviceState device_state() const { return device_state_; }
    TaskState task_state(TaskKind k) const { return tasks_[index(k)]; }
    std::optional<TaskKind> running() const;
    const std::vector<std::uint16_t>& rates() const { return rates_; }
    const EnergyLedger& ledger() const { return ledger_; }

    /// Buffer that powers the given task (the single buffer for Central).
    const energy::EnergyBuffer& buffer_for(TaskKind k) const;
    energy::EnergyBuffer& buffer_for(TaskKind k);
    const energy::EnergyBuffer& sense_buffer() const { return buffers_[0]; }
    const energy::EnergyBuffer& radio_buffer() const { return buffers_[radio_index()]; }
    double stored_energy_j() const;
    double usable_energy_j() const;
    bool is_central() const { return config_.strategy == EnergyStrategy::Central; }

    /// Charges every buffer to the given fraction of its saturation cap.
    void set_initial_charge(double fraction);
    void set_buffer_energy(TaskKind k, double energy_j);
    void set_saturation_power(double peak_power_mw);

    // Algorithm-level operations -------------------------------------------------

    /// Applies one Task_Manager invocation with the module's sync counts.
    /// Charges the manager overhead; returns false if the MCU buffer cannot
    /// cover it (no transitions happen then).
    bool step_task_manager(std::uint16_t sync_current, std::uint16_t sync_new, SimTime now = 0);

    /// Deducts the task's cost from its buffer. The task must be Running.
    /// Throws InsufficientEnergy (and reverts the task to Ready) if the buffer
    /// cannot cover it.
    TaskExecution execute_task(TaskKind kind, SimTime now);

    /// Distributes one slot of harvested power across the buffers.
    void apply_energy_strategy(double harvest_power_mw, double slot_s);

    /// Forces a transition; throws IllegalTransition if it is not a diagram edge
    /// or would leave two tasks running.
    void set_task_state(TaskKind k, TaskState to, SimTime now = 0);

    // Engine hooks ---------------------------------------------------------------

    void set_forced_off(bool off) { forced_off_ = off; }
    bool forced_off() const { return forced_off_; }

    /// Beacon instant on this module's channel. Returns the started Receive
    /// when the window opened; the beacon can then be delivered.
    std::optional<TaskStart> on_beacon_window(SimTime now);
    void deliver_beacon(const protocol::Beacon& beacon);
    DeviceStep on_task_complete(SimTime now);
    DeviceStep on_energy_slot(SimTime now, double harvest_power_mw, double slot_s);

    bool awaiting_energy() const;
    protocol::DeviceReport report() const;

    // Introspection for tests.
    bool solicitation_pending() const { return solicited_seq_.has_value(); }
    bool reading_taken() const { return reading_taken_; }
    bool control_pending() const { return control_pending_; }

private:
    static std::size_t index(TaskKind k) { return static_cast<std::size_t>(k); }
    std::size_t radio_index() const { return buffers_.size() > 1 ? 1 : 0; }
    std::size_t buffer_index(TaskKind k) const;
    double task_energy(TaskKind k) const { return config_.costs[k].energy_j; }
    bool can_afford(TaskKind k) const;
    bool any_running() const;
    bool work_pending() const;
    bool sense_active() const;

    bool charge_overhead(SimTime now);
    void update_device_state(SimTime now);
    void transition(TaskKind k, TaskState to, SimTime now);
    std::optional<TaskStart> start_if_running(SimTime now);
    std::optional<TaskStart> run_manager(SimTime now);
    void settle_idle(SimTime now);
    protocol::SensorDataPacket build_packet(SimTime now) const;
    void log(SimTime t, const char* event, std::string detail) const;

    DeviceIds ids_;
    AppSpec app_;
    DeviceConfig config_;
    EventLog* log_;
    std::string entity_;

    std::vector<energy::EnergyBuffer> buffers_;  // [sense, radio] or [central]
    std::array<TaskState, 5> tasks_{};
    DeviceState device_state_ = DeviceState::LowPower;
    std::vector<std::uint16_t> rates_;

    std::optional<protocol::Beacon> inbox_;
    std::optional<std::uint32_t> solicited_seq_;
    std::uint16_t sync_current_ = 0;
    std::uint16_t sync_new_ = 0;
    bool reading_taken_ = false;
    bool control_pending_ = false;
    bool actuator_on_ = false;
    bool log_pending_ = false;
    bool forced_off_ = false;
    std::optional<TaskKind> running_;
    SimTime running_until_ = 0;
    std::uint32_t readings_sent_ = 0;

    EnergyLedger ledger_;
};

}  // namespace blis::atem
