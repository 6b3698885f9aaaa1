#pragma once

#include <cstdint>
#include <memory>
#include <queue>
#include <vector>

#include "blis/atem_device.hpp"
#include "blis/event_log.hpp"
#include "blis/forecaster.hpp"
#include "blis/protocol.hpp"
#include "blis/scenario.hpp"
#include "blis/vsda_aggregator.hpp"

namespace blis::sim {

enum class EventKind : std::uint8_t { BeaconDue, PacketArrival, TaskComplete, EnergySlot, PeriodRollover, TraceEnd };

const char* to_string(EventKind k);

struct Event {
    SimTime time_us = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::EnergySlot;
    std::size_t target = 0;  // app index or device index
    std::uint64_t generation = 0;
    bool to_aggregator = false;
    protocol::Bytes bytes;
};

/// Min-queue ordered by (time, insertion sequence).
class EventQueue {
public:
    void push(Event e);
    Event pop();
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    SimTime next_time() const { return heap_.top().time_us; }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.time_us != b.time_us ? a.time_us > b.time_us : a.seq > b.seq;
        }
    };
    std::priority_queue<Event, std::vector<Event>, Later> heap_;
    std::uint64_t next_seq_ = 0;
};

/// Load-free time-averaged energy of the device's combined store under the trace.
double steady_state_energy_j(const energy::HarvesterTrace& trace, const atem::DeviceConfig& device, double slot_s,
                             double horizon_s);

struct DeviceSlot {
    atem::DeviceRuntime runtime;
    energy::HarvesterTrace trace;
    std::size_t app_index = 0;
    bool lp_designated = false;
    double trace_scale = 1.0;
    double steady_energy_j = 0.0;
    bool sense_available = false;
    bool radio_available = false;
    std::vector<std::pair<SimTime, SimTime>> forced_off;
};

struct RunStats {
    std::uint64_t events = 0;
    std::uint64_t illegal_transitions = 0;
    std::uint64_t negative_energy_events = 0;
    std::uint64_t dependency_violations = 0;
    std::uint64_t audit_failures = 0;
    double worst_audit_error = 0.0;  // relative
    double manager_energy_j = 0.0;
    double task_energy_j = 0.0;
    std::uint64_t beacons_delivered = 0;
    std::uint64_t beacons_missed = 0;
    std::uint64_t packets_sent = 0;
    bool aborted = false;
    std::string abort_reason;
};

struct RunResult {
    EventLog log;
    RunStats stats;
};

/// One deterministic run of a scenario. Construction builds the devices,
/// traces and aggregator; run() processes events until the duration ends.
class Simulation {
public:
    Simulation(ScenarioConfig config, std::uint64_t seed);
    ~Simulation();
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    const ScenarioConfig& config() const { return config_; }
    const std::vector<DeviceSlot>& devices() const { return devices_; }
    const vsda::Aggregator& aggregator() const { return *aggregator_; }
    /// Device index of (app index, module).
    std::size_t device_index(std::size_t app_index, int module) const;

    RunResult run();

private:
    class Estimator;

    void build();
    void schedule(SimTime t, EventKind kind, std::size_t target, std::uint64_t generation = 0,
                  protocol::Bytes bytes = {}, bool to_aggregator = false);
    void handle(const Event& e);
    void on_beacon_due(const Event& e);
    void on_packet(const Event& e);
    void on_task_complete(const Event& e);
    void on_energy_slot(const Event& e);
    void on_rollover(const Event& e);
    void note_start(std::size_t device, const std::optional<atem::TaskStart>& start);
    void send_packet(std::size_t device, const protocol::SensorDataPacket& packet, SimTime now);
    void check_device(std::size_t device, SimTime now, bool force_log = false);
    void audit(SimTime now);

    ScenarioConfig config_;
    std::uint64_t seed_;
    EventLog log_;
    RunStats stats_;
    EventQueue queue_;
    std::vector<DeviceSlot> devices_;
    std::vector<std::size_t> app_first_device_;
    std::unique_ptr<Estimator> estimator_;
    std::unique_ptr<vsda::Aggregator> aggregator_;
    std::vector<std::uint64_t> beacon_generation_;
    std::vector<std::uint64_t> beacons_emitted_;
    SimTime end_us_ = 0;
    bool ran_ = false;
};

/// Convenience wrapper: build and run.
RunResult run_scenario(const ScenarioConfig& config, std::uint64_t seed);

}  // namespace blis::sim
