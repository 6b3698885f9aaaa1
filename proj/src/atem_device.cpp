#include "blis/atem_device.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blis::atem {

const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Receive: return "Receive";
        case TaskKind::Sense: return "Sense";
        case TaskKind::Transmit: return "Transmit";
        case TaskKind::Control: return "Control";
        case TaskKind::Log: return "Log";
    }
    return "?";
}

const char* to_string(TaskState s) {
    switch (s) {
        case TaskState::Ready: return "Ready";
        case TaskState::Running: return "Running";
        case TaskState::Blocked: return "Blocked";
        case TaskState::Suspended: return "Suspended";
    }
    return "?";
}

std::optional<TaskKind> parse_task_kind(std::string_view s) {
    for (auto k : kAllTasks) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::optional<TaskState> parse_task_state(std::string_view s) {
    for (auto st : {TaskState::Ready, TaskState::Running, TaskState::Blocked, TaskState::Suspended}) {
        if (s == to_string(st)) return st;
    }
    return std::nullopt;
}

bool is_legal_transition(TaskState from, TaskState to) {
    if (from == to) return false;
    // Running is only entered from Ready; every other pair is an edge.
    if (to == TaskState::Running) return from == TaskState::Ready;
    return true;
}

const char* to_string(EnergyStrategy s) {
    switch (s) {
        case EnergyStrategy::Atem: return "atem";
        case EnergyStrategy::FederatedFixed: return "fh";
        case EnergyStrategy::Central: return "central";
    }
    return "?";
}

std::optional<EnergyStrategy> parse_energy_strategy(std::string_view s) {
    if (s == "atem") return EnergyStrategy::Atem;
    if (s == "fh") return EnergyStrategy::FederatedFixed;
    if (s == "central") return EnergyStrategy::Central;
    return std::nullopt;
}

const TaskCost& TaskCostTable::operator[](TaskKind k) const {
    switch (k) {
        case TaskKind::Receive: return receive;
        case TaskKind::Sense: return sense;
        case TaskKind::Transmit: return transmit;
        case TaskKind::Control: return control;
        case TaskKind::Log: return log;
    }
    return log;
}

TaskCost& TaskCostTable::operator[](TaskKind k) {
    return const_cast<TaskCost&>(static_cast<const TaskCostTable&>(*this)[k]);
}

void TaskCostTable::validate() const {
    for (auto k : kAllTasks) {
        const auto& c = (*this)[k];
        if (c.duration_us <= 0 || !(c.energy_j > 0.0) || !std::isfinite(c.energy_j)) {
            throw Error(ErrorCode::InvalidArgument, std::string("task cost for ") + to_string(k) + " must be positive");
        }
    }
}

DeviceState select_device_state(double energy_j, double threshold_j) {
    return energy_j <= threshold_j ? DeviceState::LowPower : DeviceState::Normal;
}

std::vector<std::uint16_t> assign_rates(const AppSpec& spec, int module, DeviceState state) {
    return std::vector<std::uint16_t>(static_cast<std::size_t>(spec.sensors_of(module)), spec.rate_for(state));
}

energy::FederatedStore DeviceConfig::default_store() {
    energy::FederatedStore s;
    s.sense.capacitance_f = 47e-6;
    s.radio.capacitance_f = 220e-6;
    return s;
}

void DeviceConfig::validate() const {
    store.validate();
    costs.validate();
    if (!std::isfinite(energy_threshold_j)) throw Error(ErrorCode::NonFiniteInput, "energy threshold");
}

std::string DeviceIds::entity() const { return "dev:" + std::to_string(app_id) + "." + std::to_string(module); }

DeviceRuntime::DeviceRuntime(DeviceIds ids, AppSpec app, DeviceConfig config, EventLog* log)
    : ids_(ids), app_(std::move(app)), config_(std::move(config)), log_(log), entity_(ids_.entity()) {
    app_.validate();
    config_.validate();
    if (ids_.module < 0 || ids_.module >= app_.module_count) {
        throw Error(ErrorCode::InvalidArgument, "module index outside application");
    }
    if (is_central()) {
        energy::EnergyBuffer central = config_.store.radio;
        central.capacitance_f = config_.store.sense.capacitance_f + config_.store.radio.capacitance_f;
        central.energy_j = config_.store.sense.energy_j + config_.store.radio.energy_j;
        buffers_ = {central};
    } else {
        buffers_ = {config_.store.sense, config_.store.radio};
    }
    tasks_.fill(TaskState::Suspended);
    // Sense and Transmit start idle so the first beacon can be received.
    tasks_[index(TaskKind::Receive)] = TaskState::Ready;
    device_state_ = config_.clamp_state.value_or(select_device_state(usable_energy_j(), config_.threshold_j()));
    rates_ = assign_rates(app_, ids_.module, device_state_);
    ledger_.initial_j = stored_energy_j();
}

std::optional<TaskKind> DeviceRuntime::running() const { return running_; }

std::size_t DeviceRuntime::buffer_index(TaskKind k) const {
    if (buffers_.size() == 1) return 0;
    return (k == TaskKind::Receive || k == TaskKind::Transmit) ? 1 : 0;
}

const energy::EnergyBuffer& DeviceRuntime::buffer_for(TaskKind k) const { return buffers_[buffer_index(k)]; }
energy::EnergyBuffer& DeviceRuntime::buffer_for(TaskKind k) { return buffers_[buffer_index(k)]; }

double DeviceRuntime::stored_energy_j() const {
    double e = 0.0;
    for (const auto& b : buffers_) e += b.energy_j;
    return e;
}

double DeviceRuntime::usable_energy_j() const {
    double e = 0.0;
    for (const auto& b : buffers_) e += b.usable_energy_j();
    return e;
}

void DeviceRuntime::set_saturation_power(double peak_power_mw) {
    for (auto& b : buffers_) {
        const double cap = energy::saturation_energy_j(b.capacitance_f, b.parallel_resistance_ohm, peak_power_mw);
        b.max_energy_j = std::max(cap, 1e-15);
        if (b.energy_j > b.max_energy_j) {
            ledger_.initial_j -= b.energy_j - b.max_energy_j;
            b.energy_j = b.max_energy_j;
        }
    }
}

void DeviceRuntime::set_initial_charge(double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "initial charge must be in [0,1]");
    for (auto& b : buffers_) {
        if (!std::isfinite(b.max_energy_j)) {
            throw Error(ErrorCode::InvalidArgument, "initial charge needs a saturation cap");
        }
        ledger_.initial_j += fraction * b.max_energy_j - b.energy_j;
        b.energy_j = fraction * b.max_energy_j;
    }
}

void DeviceRuntime::set_buffer_energy(TaskKind k, double energy_j) {
    require_finite(energy_j, "buffer energy");
    if (energy_j < 0.0) throw Error(ErrorCode::InvalidArgument, "buffer energy must be >= 0");
    auto& b = buffer_for(k);
    ledger_.initial_j += energy_j - b.energy_j;
    b.energy_j = energy_j;
}

bool DeviceRuntime::can_afford(TaskKind k) const { return buffer_for(k).usable_energy_j() > task_energy(k); }

bool DeviceRuntime::any_running() const { return running_.has_value(); }

bool DeviceRuntime::work_pending() const {
    return sync_new_ > sync_current_ || reading_taken_ || control_pending_ || log_pending_;
}

bool DeviceRuntime::sense_active() const {
    const auto s = tasks_[index(TaskKind::Sense)];
    return s == TaskState::Ready || s == TaskState::Running;
}

bool DeviceRuntime::awaiting_energy() const {
    if (any_running()) return false;
    for (auto k : {TaskKind::Sense, TaskKind::Transmit, TaskKind::Control, TaskKind::Log}) {
        if (tasks_[index(k)] == TaskState::Ready) return true;
    }
    return false;
}

void DeviceRuntime::log(SimTime t, const char* event, std::string detail) const {
    if (log_) log_->add(t, entity_, event, std::move(detail));
}

void DeviceRuntime::transition(TaskKind k, TaskState to, SimTime now) {
    const TaskState from = tasks_[index(k)];
    if (from == to) return;
    if (!is_legal_transition(from, to)) {
        throw Error(ErrorCode::IllegalTransition,
                    std::string(to_string(k)) + " " + to_string(from) + "->" + to_string(to));
    }
    if (to == TaskState::Running && running_ && *running_ != k) {
        throw Error(ErrorCode::IllegalTransition,
                    std::string(to_string(k)) + " cannot run while " + to_string(*running_) + " is running");
    }
    tasks_[index(k)] = to;
    if (to == TaskState::Running) {
        running_ = k;
        running_until_ = -1;
    } else if (from == TaskState::Running) {
        running_.reset();
    }
    log(now, "task", Detail().kv("kind", to_string(k)).kv("from", to_string(from)).kv("to", to_string(to)).str());
}

void DeviceRuntime::set_task_state(TaskKind k, TaskState to, SimTime now) { transition(k, to, now); }

bool DeviceRuntime::charge_overhead(SimTime now) {
    const double cost = config_.strategy == EnergyStrategy::Atem ? config_.overhead.overall.energy_j
                                                                 : config_.overhead.task_manager.energy_j;
    auto& mcu = buffers_[0];
    if (mcu.usable_energy_j() < cost) {
        log(now, "brownout", Detail().kv("E_uj", j_to_uj(mcu.energy_j)).str());
        return false;
    }
    mcu.energy_j -= cost;
    ledger_.overhead_j += cost;
    ++ledger_.manager_invocations;
    return true;
}

void DeviceRuntime::update_device_state(SimTime now) {
    const DeviceState next =
        config_.clamp_state.value_or(select_device_state(usable_energy_j(), config_.threshold_j()));
    if (next != device_state_) {
        const DeviceState prev = device_state_;
        device_state_ = next;
        rates_ = assign_rates(app_, ids_.module, device_state_);
        log(now, "device_state",
            Detail().kv("from", protocol::to_string(prev)).kv("to", protocol::to_string(next)).kv("rates", rates_).str());
    }
}

bool DeviceRuntime::step_task_manager(std::uint16_t sync_current, std::uint16_t sync_new, SimTime now) {
    sync_current_ = sync_current;
    sync_new_ = sync_new;
    if (!charge_overhead(now)) return false;
    update_device_state(now);

    const auto state = [this](TaskKind k) { return tasks_[index(k)]; };
    const auto move_to = [&](TaskKind k, TaskState target) {
        if (state(k) == target) return;
        if (target == TaskState::Running && state(k) != TaskState::Ready) transition(k, TaskState::Ready, now);
        transition(k, target, now);
    };

    // Sense: solicited readings run (or wait for energy); otherwise blocked
    // on the next Receive. A reading already taken stays completed.
    const bool solicited = sync_new_ > sync_current_ && !reading_taken_;
    if (state(TaskKind::Sense) != TaskState::Running) {
        if (solicited) {
            const bool go = can_afford(TaskKind::Sense) && !any_running();
            move_to(TaskKind::Sense, go ? TaskState::Running : TaskState::Ready);
        } else if (!reading_taken_) {
            move_to(TaskKind::Sense, TaskState::Blocked);
        }
    }

    if (state(TaskKind::Transmit) != TaskState::Running) {
        const bool sensed = state(TaskKind::Sense) == TaskState::Running || reading_taken_;
        move_to(TaskKind::Transmit, sensed ? TaskState::Ready : TaskState::Blocked);
    }

    if (state(TaskKind::Receive) != TaskState::Running) {
        bool idle = true;
        for (auto k : {TaskKind::Sense, TaskKind::Transmit, TaskKind::Control, TaskKind::Log}) {
            idle = idle && state(k) == TaskState::Suspended;
        }
        move_to(TaskKind::Receive, idle ? TaskState::Ready : TaskState::Blocked);
    }

    if (state(TaskKind::Transmit) == TaskState::Ready && can_afford(TaskKind::Transmit) && !any_running()) {
        move_to(TaskKind::Transmit, TaskState::Running);
    }

    for (auto [k, pending] : {std::pair{TaskKind::Control, control_pending_}, std::pair{TaskKind::Log, log_pending_}}) {
        if (!pending || state(k) == TaskState::Running) continue;
        move_to(k, can_afford(k) && !any_running() ? TaskState::Running : TaskState::Ready);
    }
    return true;
}

void DeviceRuntime::settle_idle(SimTime now) {
    if (work_pending() || any_running()) return;
    for (auto k : {TaskKind::Sense, TaskKind::Transmit, TaskKind::Control, TaskKind::Log}) {
        if (tasks_[index(k)] != TaskState::Suspended) transition(k, TaskState::Suspended, now);
    }
    if (tasks_[index(TaskKind::Receive)] == TaskState::Blocked) transition(TaskKind::Receive, TaskState::Ready, now);
}

TaskExecution DeviceRuntime::execute_task(TaskKind kind, SimTime now) {
    if (tasks_[index(kind)] != TaskState::Running) {
        throw Error(ErrorCode::InvalidArgument, std::string(to_string(kind)) + " is not running");
    }
    auto& buffer = buffer_for(kind);
    const double cost = task_energy(kind);
    if (buffer.usable_energy_j() < cost) {
        transition(kind, TaskState::Ready, now);
        throw Error(ErrorCode::InsufficientEnergy,
                    std::string(to_string(kind)) + " needs " + format_double(j_to_uj(cost)) + " uJ");
    }
    buffer.energy_j = std::max(0.0, buffer.energy_j - cost);
    ledger_.task_j += cost;
    ++ledger_.tasks_executed;
    running_until_ = now + config_.costs[kind].duration_us;
    log(now, "task_start",
        Detail()
            .kv("kind", to_string(kind))
            .kv("cost_uj", j_to_uj(cost))
            .kv("buffer", static_cast<int>(buffer_index(kind)))
            .kv("E_uj", j_to_uj(buffer.energy_j))
            .kv("until", running_until_)
            .str());
    return {running_until_, cost};
}

std::optional<TaskStart> DeviceRuntime::start_if_running(SimTime now) {
    if (!running_ || running_until_ >= 0) return std::nullopt;
    const TaskKind k = *running_;
    const auto exec = execute_task(k, now);
    return TaskStart{k, exec.completion_us};
}

std::optional<TaskStart> DeviceRuntime::run_manager(SimTime now) {
    if (!step_task_manager(sync_current_, sync_new_, now)) return std::nullopt;
    settle_idle(now);
    return start_if_running(now);
}

void DeviceRuntime::apply_energy_strategy(double harvest_power_mw, double slot_s) {
    double shares[2] = {harvest_power_mw, 0.0};
    switch (config_.strategy) {
        case EnergyStrategy::Atem: {
            auto [s, r] = energy::split_harvest(config_.store, harvest_power_mw, sense_active());
            shares[0] = s;
            shares[1] = r;
            break;
        }
        case EnergyStrategy::FederatedFixed:
            shares[0] = 0.5 * harvest_power_mw;
            shares[1] = harvest_power_mw - shares[0];
            break;
        case EnergyStrategy::Central:
            break;
    }
    for (std::size_t i = 0; i < buffers_.size(); ++i) {
        const auto flow = energy::step_buffer(buffers_[i], shares[i], slot_s);
        ledger_.harvested_j += flow.harvested_j;
        ledger_.leaked_j += flow.leaked_j;
        ledger_.spilled_j += flow.spilled_j;
    }
}

std::optional<TaskStart> DeviceRuntime::on_beacon_window(SimTime now) {
    const char* reason = nullptr;
    if (forced_off_) {
        reason = "forced_off";
    } else if (any_running()) {
        reason = "busy";
    } else if (!charge_overhead(now)) {
        reason = "brownout";
    } else {
        update_device_state(now);
        if (tasks_[index(TaskKind::Receive)] != TaskState::Ready) {
            reason = "blocked";
        } else if (!can_afford(TaskKind::Receive)) {
            reason = "energy";
        }
    }
    if (reason) {
        log(now, "beacon_miss", Detail().kv("reason", reason).str());
        return std::nullopt;
    }
    transition(TaskKind::Receive, TaskState::Running, now);
    // Sense and Transmit now wait on the receive that may solicit them.
    transition(TaskKind::Sense, TaskState::Blocked, now);
    transition(TaskKind::Transmit, TaskState::Blocked, now);
    return start_if_running(now);
}

void DeviceRuntime::deliver_beacon(const protocol::Beacon& beacon) { inbox_ = beacon; }

DeviceStep DeviceRuntime::on_task_complete(SimTime now) {
    if (!running_) throw Error(ErrorCode::InvalidArgument, "no task is running");
    const TaskKind k = *running_;
    transition(k, TaskState::Suspended, now);
    DeviceStep step;
    const auto j = static_cast<std::size_t>(ids_.module);
    const double surplus_threshold = config_.threshold_j() + task_energy(TaskKind::Log);

    switch (k) {
        case TaskKind::Receive:
            if (inbox_) {
                const auto& b = *inbox_;
                if (j < b.app_synch.sync_current.size()) {
                    sync_current_ = b.app_synch.sync_current[j];
                    sync_new_ = b.app_synch.sync_new[j];
                }
                reading_taken_ = false;
                if (sync_new_ > sync_current_) {
                    solicited_seq_ = b.seq;
                } else {
                    solicited_seq_.reset();
                }
                if (b.actuator_control && b.actuator_control->target_module == j) {
                    control_pending_ = true;
                    actuator_on_ = b.actuator_control->state;
                }
                log(now, "beacon_rx",
                    Detail()
                        .kv("seq", static_cast<std::int64_t>(b.seq))
                        .kv("solicited", sync_new_ > sync_current_)
                        .kv("control", control_pending_)
                        .str());
                inbox_.reset();
            }
            break;
        case TaskKind::Sense:
            reading_taken_ = true;
            if (buffer_for(TaskKind::Log).usable_energy_j() > surplus_threshold) log_pending_ = true;
            break;
        case TaskKind::Transmit:
            step.outgoing = build_packet(now);
            ++readings_sent_;
            reading_taken_ = false;
            sync_current_ = sync_new_;
            solicited_seq_.reset();
            break;
        case TaskKind::Control:
            control_pending_ = false;
            log(now, "actuator", Detail().kv("state", actuator_on_ ? "on" : "off").str());
            if (buffer_for(TaskKind::Log).usable_energy_j() > surplus_threshold) log_pending_ = true;
            break;
        case TaskKind::Log:
            log_pending_ = false;
            break;
    }
    step.started = run_manager(now);
    return step;
}

DeviceStep DeviceRuntime::on_energy_slot(SimTime now, double harvest_power_mw, double slot_s) {
    apply_energy_strategy(harvest_power_mw, slot_s);
    DeviceStep step;
    if (!awaiting_energy()) return step;
    // Wake only when a waiting task's guard now holds (voltage comparator).
    bool wake = false;
    for (auto k : {TaskKind::Sense, TaskKind::Transmit, TaskKind::Control, TaskKind::Log}) {
        if (tasks_[index(k)] == TaskState::Ready && can_afford(k)) wake = true;
    }
    if (wake) step.started = run_manager(now);
    return step;
}

protocol::SensorDataPacket DeviceRuntime::build_packet(SimTime now) const {
    std::vector<protocol::SensorReading> readings;
    const int sensors = app_.sensors_of(ids_.module);
    const auto sample_ms = static_cast<std::uint32_t>((now / 1000) & 0xFFFFFFFFu);
    for (int k = 0; k < sensors; ++k) {
        // Application payload is opaque to the simulation; a deterministic
        // placeholder value identifies the reading.
        const std::int32_t value = 1000 * (ids_.app_id * 100 + ids_.module * 10 + k) +
                                   static_cast<std::int32_t>(readings_sent_ % 1000);
        readings.push_back({static_cast<std::uint8_t>(k), value, sample_ms});
    }
    return protocol::make_sensor_packet(static_cast<std::uint8_t>(ids_.app_id), static_cast<std::uint8_t>(ids_.module),
                                        solicited_seq_.value_or(0), report(), std::move(readings));
}

protocol::DeviceReport DeviceRuntime::report() const {
    const double nj = usable_energy_j() * 1e9;
    const auto clamped = std::min(nj, static_cast<double>(std::numeric_limits<std::uint32_t>::max()));
    return {device_state_, static_cast<std::uint32_t>(std::llround(clamped))};
}

}  // namespace blis::atem
