#include "blis/vsda_aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

namespace blis::vsda {

const char* to_string(Scheme s) { return s == Scheme::Vsda ? "vsda" : "polling"; }

std::optional<Scheme> parse_scheme(std::string_view s) {
    if (s == "vsda") return Scheme::Vsda;
    if (s == "polling") return Scheme::Polling;
    return std::nullopt;
}

void AggregatorConfig::validate() const {
    if (reattempt_limit < 0) throw Error(ErrorCode::InvalidArgument, "reattempt_limit must be >= 0");
    if (!(initial_alpha > 0.0 && initial_alpha <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "initial_alpha must be in (0,1]");
    }
    if (alpha_horizon < 1) throw Error(ErrorCode::InvalidArgument, "alpha_horizon must be >= 1");
    if (!(min_alpha > 0.0 && min_alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "min_alpha must be in (0,1]");
    if (min_period_us <= 0) throw Error(ErrorCode::InvalidArgument, "min_period_us must be > 0");
}

std::uint32_t total_rate(const AppSpec& spec, std::span<const DeviceState> states) {
    if (static_cast<int>(states.size()) != spec.module_count) {
        throw Error(ErrorCode::InvalidArgument, "one state per module is required");
    }
    std::uint32_t total = 0;
    for (int j = 0; j < spec.module_count; ++j) {
        total += static_cast<std::uint32_t>(spec.sensors_of(j)) * spec.rate_for(states[static_cast<std::size_t>(j)]);
    }
    return total;
}

std::vector<std::uint16_t> module_targets(const AppSpec& spec, std::span<const DeviceState> states) {
    if (static_cast<int>(states.size()) != spec.module_count) {
        throw Error(ErrorCode::InvalidArgument, "one state per module is required");
    }
    std::vector<std::uint16_t> out;
    for (auto s : states) out.push_back(spec.rate_for(s));
    return out;
}

BeaconPeriod compute_beacon_period(double alpha, SimTime period_us, std::uint32_t total, SimTime floor_us) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1]");
    if (period_us <= 0) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
    BeaconPeriod p;
    if (total == 0) {
        p.tau_us = period_us;
        return p;
    }
    p.tau_us = static_cast<SimTime>(std::floor(alpha * static_cast<double>(period_us) / total));
    // Guard against the division rounding up past the exact bound.
    while (static_cast<double>(p.tau_us) * total > alpha * static_cast<double>(period_us)) --p.tau_us;
    if (p.tau_us < floor_us) {
        p.tau_us = floor_us;
        p.infeasible = true;
    }
    return p;
}

BeaconPeriod compute_beacon_period(double alpha, SimTime period_us, const AppSpec& spec,
                                   std::span<const DeviceState> states, SimTime floor_us) {
    return compute_beacon_period(alpha, period_us, total_rate(spec, states), floor_us);
}

SyncChoice set_sync_vector(const protocol::SyncVector& current, std::span<const std::uint16_t> targets,
                           std::size_t start, std::span<const bool> eligible) {
    if (current.size() != targets.size()) throw Error(ErrorCode::InvalidArgument, "targets must match the vector");
    if (!eligible.empty() && eligible.size() != current.size()) {
        throw Error(ErrorCode::InvalidArgument, "eligibility mask must match the vector");
    }
    SyncChoice out{current, std::nullopt};
    const std::size_t m = current.size();
    if (m == 0) return out;
    for (int pass = eligible.empty() ? 1 : 0; pass < 2 && !out.module; ++pass) {
        for (std::size_t step = 0; step < m; ++step) {
            const std::size_t j = (start + step) % m;
            if (pass == 0 && !eligible[j]) continue;
            if (current[j] < targets[j]) {
                out.module = static_cast<int>(j);
                break;
            }
        }
    }
    if (out.module) ++out.next[static_cast<std::size_t>(*out.module)];
    return out;
}

Aggregator::Aggregator(std::vector<AppSpec> apps, AggregatorConfig config, StateEstimator* estimator, EventLog* log)
    : config_(config), estimator_(estimator), log_(log) {
    config_.validate();
    std::set<int> ids;
    for (auto& spec : apps) {
        spec.validate();
        if (!ids.insert(spec.app_id).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate app_id " + std::to_string(spec.app_id));
        }
        const auto m = static_cast<std::size_t>(spec.module_count);
        AppState a;
        a.spec = spec;
        a.alpha = forecast::AlphaTracker(config_.alpha_horizon, config_.initial_alpha);
        a.current.assign(m, 0);
        a.next.assign(m, 0);
        a.known.assign(m, DeviceState::Normal);
        a.estimated.assign(m, DeviceState::Normal);
        a.reports.assign(m, ModuleReport{});
        a.alpha_used = config_.initial_alpha;
        for (int j = 0; j < spec.module_count; ++j) {
            a.rates_current.insert(a.rates_current.end(), static_cast<std::size_t>(spec.sensors_of(j)), spec.rate_nml);
        }
        apps_.push_back(std::move(a));
    }
    for (auto& a : apps_) refresh_period(a, 0);
}

std::optional<std::size_t> Aggregator::app_index(int app_id) const {
    for (std::size_t i = 0; i < apps_.size(); ++i) {
        if (apps_[i].spec.app_id == app_id) return i;
    }
    return std::nullopt;
}

void Aggregator::log(SimTime t, const AppState& a, const char* event, std::string detail) const {
    if (log_) log_->add(t, "agg:" + std::to_string(a.spec.app_id), event, std::move(detail));
}

std::uint32_t Aggregator::allocate_seq(AppState& a) { return a.next_seq++; }

void Aggregator::estimate_states(AppState& a, std::size_t index, SimTime now) {
    for (int j = 0; j < a.spec.module_count; ++j) {
        const auto js = static_cast<std::size_t>(j);
        a.estimated[js] = estimator_ ? estimator_->estimate(index, j, now, a.tau.tau_us, a.reports[js]) : a.known[js];
    }
}

void Aggregator::refresh_period(AppState& a, SimTime now) {
    const auto m = static_cast<std::size_t>(a.spec.module_count);
    std::uint32_t total = 0;
    double alpha = 1.0;
    if (config_.scheme == Scheme::Polling) {
        a.targets.assign(m, a.spec.rate_nml);
        for (int j = 0; j < a.spec.module_count; ++j) total += static_cast<std::uint32_t>(a.spec.sensors_of(j)) * a.spec.rate_nml;
    } else {
        a.targets = module_targets(a.spec, a.estimated);
        // A target never drops below what was already collected this period.
        for (std::size_t j = 0; j < m; ++j) a.targets[j] = std::max(a.targets[j], a.current[j]);
        total = total_rate(a.spec, a.estimated);
        const double measured = a.alpha.alpha();
        if (std::abs(measured - a.alpha_used) > config_.alpha_recompute_delta) {
            log(now, a, "alpha", Detail().kv("from", a.alpha_used).kv("to", measured).str());
            a.alpha_used = measured;
        }
        alpha = std::clamp(a.alpha_used, config_.min_alpha, 1.0);
    }
    const auto tau = compute_beacon_period(alpha, a.spec.period_us, total, config_.min_period_us);
    if (tau.tau_us != a.tau.tau_us || tau.infeasible != a.tau.infeasible) {
        log(now, a, "tau",
            Detail().kv("tau_us", tau.tau_us).kv("alpha", alpha).kv("total_rate", total).kv("infeasible", tau.infeasible).str());
    }
    a.tau = tau;
    if (tau.infeasible && !a.infeasible_flagged) {
        a.infeasible_flagged = true;
        ++a.counters.infeasible_periods;
    }
}

void Aggregator::mark_lost(AppState& a, const Solicitation& s, SimTime now, const char* reason) {
    ++a.counters.lost;
    log(now, a, "lost",
        Detail()
            .kv("module", s.module)
            .kv("seq", static_cast<std::int64_t>(s.seq))
            .kv("attempts", s.attempts)
            .kv("reason", reason)
            .str());
    for (auto it = a.seq_to_module.begin(); it != a.seq_to_module.end();) {
        it = it->second == s.module ? a.seq_to_module.erase(it) : std::next(it);
    }
}

protocol::Beacon Aggregator::build_beacon(AppState& a, std::uint32_t seq, const protocol::SyncVector& next) {
    protocol::Beacon b;
    b.app_id = static_cast<std::uint8_t>(a.spec.app_id);
    b.seq = seq;
    b.rate_control.rate_current = a.rates_current;
    for (int j = 0; j < a.spec.module_count; ++j) {
        const auto state = config_.scheme == Scheme::Polling ? DeviceState::Normal : a.estimated[static_cast<std::size_t>(j)];
        b.rate_control.rate_new.insert(b.rate_control.rate_new.end(), static_cast<std::size_t>(a.spec.sensors_of(j)),
                                       a.spec.rate_for(state));
    }
    a.rates_current = b.rate_control.rate_new;
    b.app_synch.sync_current = a.current;
    b.app_synch.sync_new = next;
    if (a.queued_actuator) {
        b.actuator_control = a.queued_actuator;
        a.queued_actuator.reset();
    }
    ++a.counters.beacons;
    return b;
}

std::optional<protocol::Beacon> Aggregator::emit_vsda(AppState& a, std::size_t index, SimTime now) {
    estimate_states(a, index, now);
    refresh_period(a, now);

    if (!a.pending.empty()) {
        auto& s = a.pending.begin()->second;
        if (s.attempts < config_.reattempt_limit) {
            ++s.attempts;
            s.last_emit_us = now;
            ++a.counters.reattempts;
            log(now, a, "reattempt",
                Detail().kv("module", s.module).kv("seq", static_cast<std::int64_t>(s.seq)).kv("attempt", s.attempts).str());
            auto b = build_beacon(a, s.seq, a.next);
            log(now, a, "beacon",
                Detail()
                    .kv("seq", static_cast<std::int64_t>(s.seq))
                    .kv("kind", "reattempt")
                    .kv("V", a.current)
                    .kv("Vhat", a.next)
                    .kv("tau_us", a.tau.tau_us)
                    .str());
            return b;
        }
        const Solicitation lost = s;
        a.pending.clear();
        mark_lost(a, lost, now, "reattempts");
        a.next = a.current;
        a.scan_start = (static_cast<std::size_t>(lost.module) + 1) % a.current.size();
    }

    std::unique_ptr<bool[]> flags;
    std::span<const bool> eligible;
    if (config_.skip_lp) {
        flags = std::make_unique<bool[]>(a.estimated.size());
        for (std::size_t j = 0; j < a.estimated.size(); ++j) flags[j] = a.estimated[j] == DeviceState::Normal;
        eligible = std::span<const bool>(flags.get(), a.estimated.size());
    }
    const auto choice = set_sync_vector(a.current, a.targets, a.scan_start, eligible);
    if (!choice.module && !config_.keep_alive) return std::nullopt;

    const std::uint32_t seq = allocate_seq(a);
    a.next = choice.next;
    const char* kind = "keepalive";
    if (choice.module) {
        const int j = *choice.module;
        const auto js = static_cast<std::size_t>(j);
        a.pending[j] = Solicitation{seq, j, a.next[js], now, now, 0, a.estimated[js]};
        a.seq_to_module[seq] = j;
        ++a.counters.solicitations;
        kind = "solicit";
        log(now, a, "solicit",
            Detail()
                .kv("module", j)
                .kv("seq", static_cast<std::int64_t>(seq))
                .kv("count", static_cast<int>(a.next[js]))
                .kv("predicted", protocol::to_string(a.estimated[js]))
                .str());
    }
    auto b = build_beacon(a, seq, a.next);
    log(now, a, "beacon",
        Detail()
            .kv("seq", static_cast<std::int64_t>(seq))
            .kv("kind", kind)
            .kv("V", a.current)
            .kv("Vhat", a.next)
            .kv("tau_us", a.tau.tau_us)
            .str());
    return b;
}

std::optional<protocol::Beacon> Aggregator::emit_polling(AppState& a, SimTime now) {
    refresh_period(a, now);
    const std::size_t m = a.current.size();
    std::optional<std::size_t> chosen;
    for (std::size_t step = 0; step < m; ++step) {
        const std::size_t j = (a.round_robin + step) % m;
        if (a.current[j] < a.targets[j]) {
            chosen = j;
            a.round_robin = (j + 1) % m;
            break;
        }
    }
    if (!chosen && !config_.keep_alive) return std::nullopt;

    const std::uint32_t seq = allocate_seq(a);
    protocol::SyncVector next = a.current;
    const char* kind = "keepalive";
    if (chosen) {
        const int j = static_cast<int>(*chosen);
        ++next[*chosen];
        auto it = a.pending.find(j);
        if (it != a.pending.end() && it->second.attempts >= config_.reattempt_limit) {
            const Solicitation lost = it->second;
            a.pending.erase(it);
            mark_lost(a, lost, now, "reattempts");
            it = a.pending.end();
        }
        if (it != a.pending.end()) {
            auto& s = it->second;
            ++s.attempts;
            s.last_emit_us = now;
            ++a.counters.reattempts;
            kind = "reattempt";
            log(now, a, "reattempt",
                Detail().kv("module", j).kv("seq", static_cast<std::int64_t>(seq)).kv("attempt", s.attempts).str());
        } else {
            a.pending[j] = Solicitation{seq, j, next[*chosen], now, now, 0, DeviceState::Normal};
            ++a.counters.solicitations;
            kind = "solicit";
            log(now, a, "solicit",
                Detail()
                    .kv("module", j)
                    .kv("seq", static_cast<std::int64_t>(seq))
                    .kv("count", static_cast<int>(next[*chosen]))
                    .kv("predicted", "NML")
                    .str());
        }
        a.seq_to_module[seq] = j;
    }
    a.next = next;
    auto b = build_beacon(a, seq, next);
    log(now, a, "beacon",
        Detail()
            .kv("seq", static_cast<std::int64_t>(seq))
            .kv("kind", kind)
            .kv("V", a.current)
            .kv("Vhat", next)
            .kv("tau_us", a.tau.tau_us)
            .str());
    return b;
}

std::optional<protocol::Beacon> Aggregator::emit_beacon(std::size_t app_index, SimTime now) {
    auto& a = apps_.at(app_index);
    return config_.scheme == Scheme::Polling ? emit_polling(a, now) : emit_vsda(a, app_index, now);
}

ReplyResult Aggregator::on_sensor_data(const protocol::SensorDataPacket& packet, SimTime now) {
    ReplyResult result;
    const auto index = app_index(packet.app_id());
    if (!index) return result;
    auto& a = apps_[*index];
    const int module = packet.module_id();
    if (module < 0 || module >= a.spec.module_count) {
        ++a.counters.stale;
        log(now, a, "stale", Detail().kv("module", module).kv("seq", static_cast<std::int64_t>(packet.in_reply_to)).str());
        return result;
    }
    const auto js = static_cast<std::size_t>(module);
    a.reports[js] = ModuleReport{true, packet.report.state, packet.report.stored_energy_nj * 1e-9, now};
    a.known[js] = packet.report.state;

    const auto seq_it = a.seq_to_module.find(packet.in_reply_to);
    const auto pend_it = a.pending.find(module);
    if (seq_it == a.seq_to_module.end() || seq_it->second != module || pend_it == a.pending.end()) {
        ++a.counters.stale;
        log(now, a, "stale", Detail().kv("module", module).kv("seq", static_cast<std::int64_t>(packet.in_reply_to)).str());
        return result;
    }
    const Solicitation s = pend_it->second;
    a.pending.erase(pend_it);
    for (auto it = a.seq_to_module.begin(); it != a.seq_to_module.end();) {
        it = it->second == module ? a.seq_to_module.erase(it) : std::next(it);
    }
    a.current[js] = s.count;
    a.next[js] = s.count;
    a.scan_start = 0;
    ++a.counters.answered;
    if (config_.scheme == Scheme::Vsda) a.alpha.record(s.predicted, packet.report.state);

    result.outcome = ReplyOutcome::Accepted;
    result.delay_s = to_seconds(now - s.first_emit_us);
    const auto sample_us = static_cast<SimTime>(packet.payload.readings.front().sample_time_ms) * 1000;
    log(now, a, "sensor_rx",
        Detail()
            .kv("module", module)
            .kv("seq", static_cast<std::int64_t>(s.seq))
            .kv("count", static_cast<int>(s.count))
            .kv("attempts", s.attempts)
            .kv("delay_s", result.delay_s)
            .kv("age_s", to_seconds(now - sample_us))
            .kv("state", protocol::to_string(packet.report.state))
            .kv("predicted", protocol::to_string(s.predicted))
            .kv("E_uj", packet.report.stored_energy_nj * 1e-3)
            .kv("period", static_cast<std::int64_t>(a.period_index))
            .str());
    return result;
}

void Aggregator::on_period_rollover(std::size_t app_index, SimTime now) {
    auto& a = apps_.at(app_index);
    // Not lost: the reattempts were cut short, not exhausted.
    for (const auto& [module, s] : a.pending) {
        ++a.counters.abandoned;
        log(now, a, "abandoned",
            Detail().kv("module", module).kv("seq", static_cast<std::int64_t>(s.seq)).kv("attempts", s.attempts).str());
    }
    a.pending.clear();
    a.seq_to_module.clear();
    log(now, a, "period",
        Detail()
            .kv("index", static_cast<std::int64_t>(a.period_index))
            .kv("counts", a.current)
            .kv("targets", a.targets)
            .str());
    std::fill(a.current.begin(), a.current.end(), 0);
    std::fill(a.next.begin(), a.next.end(), 0);
    a.scan_start = 0;
    a.round_robin = 0;
    a.infeasible_flagged = false;
    ++a.period_index;
}

void Aggregator::queue_actuator(std::size_t app_index, protocol::ActuatorControlMsg msg) {
    auto& a = apps_.at(app_index);
    if (msg.target_module >= a.spec.module_count) {
        throw Error(ErrorCode::InvalidArgument, "actuator target outside application");
    }
    a.queued_actuator = msg;
}

void Aggregator::set_alpha(std::size_t app_index, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1]");
    auto& a = apps_.at(app_index);
    a.alpha = forecast::AlphaTracker(config_.alpha_horizon, alpha);
    a.alpha_used = alpha;
    refresh_period(a, 0);
}

}  // namespace blis::vsda
