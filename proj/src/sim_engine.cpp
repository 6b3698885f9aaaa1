#include "blis/sim_engine.hpp"

#include <algorithm>
#include <cmath>

#include "blis/rng.hpp"

namespace blis::sim {

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::BeaconDue: return "BeaconDue";
        case EventKind::PacketArrival: return "PacketArrival";
        case EventKind::TaskComplete: return "TaskComplete";
        case EventKind::EnergySlot: return "EnergySlot";
        case EventKind::PeriodRollover: return "PeriodRollover";
        case EventKind::TraceEnd: return "TraceEnd";
    }
    return "?";
}

void EventQueue::push(Event e) {
    e.seq = next_seq_++;
    heap_.push(std::move(e));
}

Event EventQueue::pop() {
    Event e = heap_.top();
    heap_.pop();
    return e;
}

namespace {

energy::EnergyBuffer combined_buffer(const atem::DeviceConfig& device, double peak_mw) {
    energy::EnergyBuffer b = device.store.radio;
    b.capacitance_f = device.store.sense.capacitance_f + device.store.radio.capacitance_f;
    b.energy_j = 0.0;
    b.max_energy_j = energy::saturation_energy_j(b.capacitance_f, b.parallel_resistance_ohm, peak_mw);
    return b;
}

}  // namespace

double steady_state_energy_j(const energy::HarvesterTrace& trace, const atem::DeviceConfig& device, double slot_s,
                             double horizon_s) {
    if (trace.empty()) return 0.0;
    auto b = combined_buffer(device, trace.peak_power_mw());
    if (!(b.max_energy_j > 0.0)) return 0.0;
    const double end = std::min(trace.end_s(), trace.start_s() + horizon_s);
    const auto slots = static_cast<long long>(std::floor((end - trace.start_s()) / slot_s + 1e-9));
    if (slots <= 0) return 0.0;
    double acc = 0.0;
    for (long long k = 0; k < slots; ++k) {
        energy::step_buffer(b, trace.power_at(trace.start_s() + static_cast<double>(k) * slot_s), slot_s);
        acc += b.energy_j;
    }
    return acc / static_cast<double>(slots);
}

class Simulation::Estimator : public vsda::StateEstimator {
public:
    explicit Estimator(Simulation& sim) : sim_(sim) {}

    void train() {
        const auto& c = sim_.config_;
        if (c.estimator != EstimatorKind::Forecast) return;
        for (std::size_t d = 0; d < sim_.devices_.size(); ++d) {
            const auto& slot = sim_.devices_[d];
            std::vector<double> history;
            if (c.forecaster == forecast::ModelKind::Lstm) {
                energy::HarvesterTrace source = slot.trace;
                if (c.trace.kind == TraceKind::Intermittent) {
                    // A separate realization stands in for the harvester's past.
                    const double span = std::min(c.duration_s, static_cast<double>(c.lstm_max_samples) * c.trace.interval_s);
                    source = energy::intermittent_trace(c.trace.intermittent, mix_seed(sim_.seed_, 10'000 + d), span,
                                                        c.trace.interval_s)
                                 .scaled(slot.trace_scale);
                }
                history = source.powers();
                if (history.size() > c.lstm_max_samples) history.resize(c.lstm_max_samples);
            }
            models_.push_back(forecast::make_model(c.forecaster, history, c.lstm, c.ewma_beta));
        }
    }

    DeviceState estimate(std::size_t app_index, int module, SimTime now, SimTime horizon_us,
                         const vsda::ModuleReport& last) override {
        const std::size_t d = sim_.device_index(app_index, module);
        const auto& slot = sim_.devices_[d];
        const auto& dev = slot.runtime;
        const double threshold = dev.config().threshold_j();
        if (sim_.config_.estimator == EstimatorKind::Oracle) {
            return dev.config().clamp_state.value_or(atem::select_device_state(dev.usable_energy_j(), threshold));
        }
        const auto& model = models_[d];
        const auto& samples = slot.trace.samples();
        const double t_s = to_seconds(now);
        auto k = static_cast<std::ptrdiff_t>(std::floor((t_s - slot.trace.start_s()) / slot.trace.sample_interval_s() + 1e-9));
        k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(samples.size()) - 1);
        std::vector<double> history(static_cast<std::size_t>(model.window()));
        for (std::size_t w = 0; w < history.size(); ++w) {
            const auto idx = std::max<std::ptrdiff_t>(0, k - static_cast<std::ptrdiff_t>(history.size() - 1 - w));
            history[w] = samples[static_cast<std::size_t>(idx)].power_mw;
        }
        const double predicted = model.predict(history);
        forecast::EstimatorParams params;
        params.buffer = combined_buffer(dev.config(), slot.trace.peak_power_mw());
        params.threshold_j = threshold;
        params.slot_s = sim_.config_.slot_s;
        double energy0 = 0.0;
        if (last.known) {
            params.horizon_s = std::max(params.slot_s, to_seconds(now - last.time_us));
            energy0 = last.energy_j + params.buffer.reserve_energy_j();
        } else {
            params.horizon_s = std::max(params.slot_s, to_seconds(horizon_us));
        }
        return forecast::estimate_state(predicted, params, energy0);
    }

private:
    Simulation& sim_;
    std::vector<forecast::ForecastModel> models_;
};

Simulation::Simulation(ScenarioConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.seed = seed;
    build();
}

Simulation::~Simulation() = default;

std::size_t Simulation::device_index(std::size_t app_index, int module) const {
    return app_first_device_.at(app_index) + static_cast<std::size_t>(module);
}

void Simulation::build() {
    config_.validate();
    end_us_ = config_.duration_us();
    const double span = config_.duration_s + config_.trace.interval_s;
    std::optional<energy::HarvesterTrace> csv;
    if (config_.trace.kind == TraceKind::Csv) csv = energy::load_trace_csv(config_.trace.path);

    devices_.reserve(config_.device_count());
    for (std::size_t a = 0; a < config_.apps.size(); ++a) {
        const auto& spec = config_.apps[a];
        app_first_device_.push_back(devices_.size());
        const auto lp_count = static_cast<int>(std::llround(config_.lp_fraction * spec.module_count));
        for (int j = 0; j < spec.module_count; ++j) {
            const std::size_t d = devices_.size();
            energy::HarvesterTrace trace;
            const auto& ts = config_.trace;
            switch (ts.kind) {
                case TraceKind::Constant: trace = energy::constant_trace(ts.power_mw, span, ts.interval_s); break;
                case TraceKind::Sinusoid:
                    trace = energy::sinusoid_trace(ts.mean_mw, ts.amplitude_mw, ts.period_s, span, ts.interval_s);
                    break;
                case TraceKind::Intermittent:
                    trace = energy::intermittent_trace(ts.intermittent, mix_seed(seed_, d), span, ts.interval_s);
                    break;
                case TraceKind::Csv: trace = *csv; break;
            }
            const bool lp = j >= spec.module_count - lp_count;
            atem::DeviceConfig dev = config_.device;
            std::optional<DeviceState> clamp;
            for (const auto& c : config_.clamps) {
                if (c.app_id == spec.app_id && c.module == j) clamp = c.state;
            }
            if (!clamp && config_.lp_mode == LpMode::Clamp) clamp = lp ? DeviceState::LowPower : DeviceState::Normal;
            dev.clamp_state = clamp;

            const double threshold = dev.threshold_j();
            double scale = 1.0;
            double steady = steady_state_energy_j(trace, dev, config_.slot_s, config_.duration_s);
            if (config_.lp_mode == LpMode::Scale && !clamp) {
                // The load-free store is linear in the harvest power (the cap
                // scales with the peak too), so the scale factor is exact.
                if (lp && steady > config_.lp_target_fraction * threshold) {
                    scale = config_.lp_target_fraction * threshold / steady;
                } else if (!lp && steady < config_.nml_target_fraction * threshold) {
                    if (!(steady > 0.0)) {
                        throw Error(ErrorCode::ConfigError, "$.trace: NML device has no harvestable power");
                    }
                    scale = config_.nml_target_fraction * threshold / steady;
                }
                if (scale != 1.0) {
                    trace = trace.scaled(scale);
                    steady = steady_state_energy_j(trace, dev, config_.slot_s, config_.duration_s);
                }
            }

            atem::DeviceRuntime runtime(atem::DeviceIds{spec.app_id, j}, spec, dev, &log_);
            runtime.set_saturation_power(trace.peak_power_mw());
            if (config_.initial_charge > 0.0) runtime.set_initial_charge(config_.initial_charge);
            DeviceSlot slot{std::move(runtime), std::move(trace), a, lp, scale, steady, false, false, {}};
            for (const auto& f : config_.forced_off) {
                if (f.app_id == spec.app_id && f.module == j) {
                    slot.forced_off.emplace_back(from_seconds(f.from_s), from_seconds(f.to_s));
                }
            }
            log_.add(0, slot.runtime.ids().entity(), "designate",
                     Detail()
                         .kv("lp", lp)
                         .kv("clamp", clamp ? protocol::to_string(*clamp) : "-")
                         .kv("scale", scale)
                         .kv("steady_uj", j_to_uj(steady))
                         .kv("threshold_uj", j_to_uj(threshold))
                         .kv("peak_mw", slot.trace.peak_power_mw())
                         .str());
            devices_.push_back(std::move(slot));
        }
    }

    estimator_ = std::make_unique<Estimator>(*this);
    estimator_->train();
    aggregator_ = std::make_unique<vsda::Aggregator>(config_.apps, config_.aggregator, estimator_.get(), &log_);
    beacon_generation_.assign(config_.apps.size(), 0);
    beacons_emitted_.assign(config_.apps.size(), 0);
}

void Simulation::schedule(SimTime t, EventKind kind, std::size_t target, std::uint64_t generation,
                          protocol::Bytes bytes, bool to_aggregator) {
    Event e;
    e.time_us = t;
    e.kind = kind;
    e.target = target;
    e.generation = generation;
    e.bytes = std::move(bytes);
    e.to_aggregator = to_aggregator;
    queue_.push(std::move(e));
}

RunResult Simulation::run() {
    if (ran_) throw Error(ErrorCode::InvalidArgument, "a Simulation runs once");
    ran_ = true;
    if (config_.apps.empty()) return RunResult{std::move(log_), stats_};
    log_.add(0, "sim", "start",
             Detail()
                 .kv("name", config_.name)
                 .kv("seed", static_cast<std::int64_t>(seed_))
                 .kv("duration_us", end_us_)
                 .kv("slot_us", config_.slot_us())
                 .kv("period_us", config_.period_us())
                 .kv("apps", config_.apps.size())
                 .kv("devices", devices_.size())
                 .kv("strategy", atem::to_string(config_.device.strategy))
                 .kv("scheme", vsda::to_string(config_.aggregator.scheme))
                 .str());

    SimTime trace_end = end_us_;
    for (std::size_t d = 0; d < devices_.size(); ++d) {
        check_device(d, 0, true);
        trace_end = std::min(trace_end, from_seconds(devices_[d].trace.end_s()));
    }
    if (!devices_.empty()) {
        schedule(0, EventKind::EnergySlot, 0);
        if (trace_end < end_us_) schedule(trace_end, EventKind::TraceEnd, 0);
    }
    for (std::size_t a = 0; a < config_.apps.size(); ++a) {
        schedule(0, EventKind::BeaconDue, a, 0);
        schedule(config_.period_us(), EventKind::PeriodRollover, a);
    }

    try {
        while (!queue_.empty()) {
            if (queue_.next_time() > end_us_) break;
            const Event e = queue_.pop();
            // a period ending exactly at the end of the run still closes
            if (e.time_us == end_us_ && e.kind != EventKind::PeriodRollover) continue;
            ++stats_.events;
            if (e.kind == EventKind::TraceEnd) {
                log_.add(e.time_us, "sim", "trace_end", {});
                end_us_ = e.time_us;
                break;
            }
            handle(e);
        }
    } catch (const Error& err) {
        if (err.code() == ErrorCode::IllegalTransition) ++stats_.illegal_transitions;
        stats_.aborted = true;
        stats_.abort_reason = std::string(blis::to_string(err.code())) + ": " + err.what();
        log_.add(end_us_, "sim", "abort", Detail().kv("reason", blis::to_string(err.code())).str());
    }
    audit(end_us_);
    log_.add(end_us_, "sim", "end", Detail().kv("events", static_cast<std::int64_t>(stats_.events)).str());
    return RunResult{std::move(log_), stats_};
}

void Simulation::handle(const Event& e) {
    switch (e.kind) {
        case EventKind::BeaconDue: on_beacon_due(e); break;
        case EventKind::PacketArrival: on_packet(e); break;
        case EventKind::TaskComplete: on_task_complete(e); break;
        case EventKind::EnergySlot: on_energy_slot(e); break;
        case EventKind::PeriodRollover: on_rollover(e); break;
        case EventKind::TraceEnd: break;
    }
}

void Simulation::on_beacon_due(const Event& e) {
    const std::size_t a = e.target;
    if (e.generation != beacon_generation_[a]) return;
    const SimTime now = e.time_us;
    const auto& spec = config_.apps[a];
    const int every = config_.actuator_every_n_beacons;
    if (every > 0 && (beacons_emitted_[a] + 1) % static_cast<std::uint64_t>(every) == 0) {
        const auto round = (beacons_emitted_[a] + 1) / static_cast<std::uint64_t>(every);
        aggregator_->queue_actuator(
            a, {round % 2 == 1, static_cast<std::uint8_t>(round % static_cast<std::uint64_t>(spec.module_count))});
    }
    const auto beacon = aggregator_->emit_beacon(a, now);
    schedule(now + aggregator_->beacon_interval(a), EventKind::BeaconDue, a, e.generation);
    if (!beacon) return;
    ++beacons_emitted_[a];
    const auto bytes = protocol::encode_beacon(*beacon);
    for (int j = 0; j < spec.module_count; ++j) {
        schedule(now + config_.propagation_delay_us, EventKind::PacketArrival, device_index(a, j), 0, bytes, false);
    }
}

void Simulation::on_packet(const Event& e) {
    const SimTime now = e.time_us;
    if (e.to_aggregator) {
        aggregator_->on_sensor_data(protocol::decode_sensor_packet(e.bytes), now);
        return;
    }
    auto& slot = devices_[e.target];
    bool off = false;
    for (const auto& [from, to] : slot.forced_off) off = off || (now >= from && now < to);
    slot.runtime.set_forced_off(off);
    const auto start = slot.runtime.on_beacon_window(now);
    if (start) {
        // Delivered: the receive window is open at the arrival instant.
        slot.runtime.deliver_beacon(protocol::decode_beacon(e.bytes));
        ++stats_.beacons_delivered;
        note_start(e.target, start);
    } else {
        ++stats_.beacons_missed;
    }
    check_device(e.target, now);
}

void Simulation::on_task_complete(const Event& e) {
    auto& slot = devices_[e.target];
    const auto step = slot.runtime.on_task_complete(e.time_us);
    if (step.outgoing) send_packet(e.target, *step.outgoing, e.time_us);
    note_start(e.target, step.started);
    check_device(e.target, e.time_us);
}

void Simulation::on_energy_slot(const Event& e) {
    const SimTime now = e.time_us;
    const double t_s = to_seconds(now);
    for (std::size_t d = 0; d < devices_.size(); ++d) {
        auto& slot = devices_[d];
        const auto step = slot.runtime.on_energy_slot(now, slot.trace.power_at(t_s), config_.slot_s);
        note_start(d, step.started);
        check_device(d, now);
    }
    const SimTime next = now + config_.slot_us();
    if (next < end_us_) schedule(next, EventKind::EnergySlot, 0);
}

void Simulation::on_rollover(const Event& e) {
    const std::size_t a = e.target;
    aggregator_->on_period_rollover(a, e.time_us);
    ++beacon_generation_[a];
    schedule(e.time_us, EventKind::BeaconDue, a, beacon_generation_[a]);
    schedule(e.time_us + config_.period_us(), EventKind::PeriodRollover, a);
}

void Simulation::note_start(std::size_t device, const std::optional<atem::TaskStart>& start) {
    if (!start) return;
    const auto& rt = devices_[device].runtime;
    if (start->kind == atem::TaskKind::Sense && !rt.solicitation_pending()) ++stats_.dependency_violations;
    if (start->kind == atem::TaskKind::Transmit && !rt.reading_taken()) ++stats_.dependency_violations;
    schedule(start->completion_us, EventKind::TaskComplete, device);
}

void Simulation::send_packet(std::size_t device, const protocol::SensorDataPacket& packet, SimTime now) {
    (void)device;
    ++stats_.packets_sent;
    schedule(now + config_.propagation_delay_us, EventKind::PacketArrival, 0, 0, protocol::encode_sensor_packet(packet),
             true);
}

void Simulation::check_device(std::size_t device, SimTime now, bool force_log) {
    auto& slot = devices_[device];
    const auto& rt = slot.runtime;
    if (rt.sense_buffer().energy_j < 0.0 || rt.radio_buffer().energy_j < 0.0) ++stats_.negative_energy_events;
    const auto& costs = rt.config().costs;
    const bool sense = rt.buffer_for(atem::TaskKind::Sense).usable_energy_j() >= costs.sense.energy_j;
    const bool radio = rt.buffer_for(atem::TaskKind::Receive).usable_energy_j() >= costs.receive.energy_j;
    if (force_log || sense != slot.sense_available) {
        slot.sense_available = sense;
        log_.add(now, rt.ids().entity(), "avail", Detail().kv("comp", "sense").kv("up", sense).str());
    }
    if (force_log || radio != slot.radio_available) {
        slot.radio_available = radio;
        log_.add(now, rt.ids().entity(), "avail", Detail().kv("comp", "radio").kv("up", radio).str());
    }
}

void Simulation::audit(SimTime now) {
    for (const auto& slot : devices_) {
        const auto& rt = slot.runtime;
        const auto& l = rt.ledger();
        const double stored = rt.stored_energy_j();
        const double inflow = std::max(1e-12, l.initial_j + l.harvested_j);
        const double rel = std::abs(l.expected_j() - stored) / inflow;
        stats_.worst_audit_error = std::max(stats_.worst_audit_error, rel);
        if (rel > 1e-6) ++stats_.audit_failures;
        stats_.manager_energy_j += l.overhead_j;
        stats_.task_energy_j += l.task_j;
        log_.add(now, rt.ids().entity(), "audit",
                 Detail()
                     .kv("stored_uj", j_to_uj(stored))
                     .kv("expected_uj", j_to_uj(l.expected_j()))
                     .kv("harvested_uj", j_to_uj(l.harvested_j))
                     .kv("leaked_uj", j_to_uj(l.leaked_j))
                     .kv("spilled_uj", j_to_uj(l.spilled_j))
                     .kv("task_uj", j_to_uj(l.task_j))
                     .kv("overhead_uj", j_to_uj(l.overhead_j))
                     .kv("invocations", static_cast<std::int64_t>(l.manager_invocations))
                     .kv("tasks", static_cast<std::int64_t>(l.tasks_executed))
                     .kv("rel_err", rel)
                     .str());
    }
}

RunResult run_scenario(const ScenarioConfig& config, std::uint64_t seed) {
    Simulation sim(config, seed);
    return sim.run();
}

}  // namespace blis::sim
