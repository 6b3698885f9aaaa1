#include "blis/energy_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "blis/rng.hpp"

namespace blis {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::NegativeRadicand: return "NegativeRadicand";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::Malformed: return "Malformed";
        case ErrorCode::Oversize: return "Oversize";
        case ErrorCode::TooManyApps: return "TooManyApps";
        case ErrorCode::IllegalTransition: return "IllegalTransition";
        case ErrorCode::InsufficientEnergy: return "InsufficientEnergy";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::WrongWindow: return "WrongWindow";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::MalformedLog: return "MalformedLog";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace blis

namespace blis::energy {

namespace {

constexpr double kRadicandTolerance = 1e-12;

bool spacing_matches(double delta, double interval) {
    return std::abs(delta - interval) <= 1e-6 * std::max(1.0, interval);
}

}  // namespace

HarvesterTrace::HarvesterTrace(std::vector<TraceSample> samples) : samples_(std::move(samples)) {
    if (samples_.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "trace needs at least two samples");
    }
    interval_s_ = samples_[1].time_s - samples_[0].time_s;
    if (!(interval_s_ > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "trace timestamps must be strictly increasing");
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& s = samples_[i];
        require_finite(s.time_s, "trace time");
        require_finite(s.power_mw, "trace power");
        if (s.power_mw < 0.0) {
            throw Error(ErrorCode::InvalidArgument,
                        "negative power at sample " + std::to_string(i));
        }
        if (i > 0 && !spacing_matches(s.time_s - samples_[i - 1].time_s, interval_s_)) {
            throw Error(ErrorCode::InvalidArgument,
                        "non-uniform sample spacing at sample " + std::to_string(i));
        }
        peak_mw_ = std::max(peak_mw_, s.power_mw);
    }
}

double HarvesterTrace::power_at(double t_s) const {
    require_finite(t_s, "trace lookup time");
    if (samples_.empty()) throw Error(ErrorCode::OutOfRange, "empty trace");
    const double slack = 1e-9 * std::max(1.0, std::abs(t_s));
    if (t_s < start_s() - slack || t_s > end_s() + slack) {
        throw Error(ErrorCode::OutOfRange, "t=" + std::to_string(t_s) + " outside trace");
    }
    const double pos = (t_s - start_s()) / interval_s_;
    auto idx = static_cast<std::size_t>(std::max(0.0, std::floor(pos + 1e-9)));
    idx = std::min(idx, samples_.size() - 1);
    return samples_[idx].power_mw;
}

HarvesterTrace HarvesterTrace::scaled(double factor) const {
    require_finite(factor, "trace scale");
    if (factor < 0.0) throw Error(ErrorCode::InvalidArgument, "negative trace scale");
    auto copy = samples_;
    for (auto& s : copy) s.power_mw *= factor;
    return HarvesterTrace(std::move(copy));
}

std::vector<double> HarvesterTrace::powers() const {
    std::vector<double> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.power_mw);
    return out;
}

double trace_power_at(const HarvesterTrace& trace, double t_s) { return trace.power_at(t_s); }

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

[[noreturn]] void csv_error(std::size_t line, const std::string& msg) {
    throw Error(ErrorCode::Malformed, "line " + std::to_string(line) + ": " + msg);
}

}  // namespace

HarvesterTrace parse_trace_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) csv_error(1, "missing header");
    ++line_no;
    std::string_view header = trim(line);
    if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
    if (header != "time_s,power_mw") csv_error(line_no, "expected header 'time_s,power_mw'");

    std::vector<TraceSample> samples;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = trim(line);
        if (row.empty()) continue;
        const auto comma = row.find(',');
        if (comma == std::string_view::npos || row.find(',', comma + 1) != std::string_view::npos) {
            csv_error(line_no, "expected two comma-separated fields");
        }
        TraceSample s{};
        if (!parse_double(row.substr(0, comma), s.time_s)) csv_error(line_no, "bad time_s");
        if (!parse_double(row.substr(comma + 1), s.power_mw)) csv_error(line_no, "bad power_mw");
        if (s.power_mw < 0.0) csv_error(line_no, "negative power_mw");
        if (!samples.empty()) {
            const double delta = s.time_s - samples.back().time_s;
            if (!(delta > 0.0)) csv_error(line_no, "time_s not strictly increasing");
            if (samples.size() >= 2) {
                const double interval = samples[1].time_s - samples[0].time_s;
                if (!spacing_matches(delta, interval)) csv_error(line_no, "non-uniform spacing");
            }
        }
        samples.push_back(s);
    }
    if (samples.size() < 2) csv_error(line_no, "trace needs at least two samples");
    return HarvesterTrace(std::move(samples));
}

HarvesterTrace load_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open trace " + path.string());
    try {
        return parse_trace_csv(in);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

void write_trace_csv(std::ostream& out, const HarvesterTrace& trace) {
    out << "time_s,power_mw\n";
    char buf[64];
    for (const auto& s : trace.samples()) {
        std::snprintf(buf, sizeof buf, "%.6f,%.9g\n", s.time_s, s.power_mw);
        out << buf;
    }
}

double EnergyBuffer::voltage_v() const { return std::sqrt(2.0 * std::max(0.0, energy_j) / capacitance_f); }

double EnergyBuffer::usable_energy_j() const { return std::max(0.0, energy_j - reserve_energy_j()); }

void EnergyBuffer::validate() const {
    require_finite(capacitance_f, "capacitance");
    require_finite(parallel_resistance_ohm, "parallel resistance");
    require_finite(efficiency, "efficiency");
    require_finite(leakage_fraction, "leakage fraction");
    require_finite(min_voltage_v, "minimum voltage");
    require_finite(energy_j, "energy");
    if (std::isnan(max_energy_j)) throw Error(ErrorCode::NonFiniteInput, "max energy");
    if (!(capacitance_f > 0.0)) throw Error(ErrorCode::InvalidArgument, "capacitance must be > 0");
    if (!(parallel_resistance_ohm > 0.0)) throw Error(ErrorCode::InvalidArgument, "r_p must be > 0");
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw Error(ErrorCode::InvalidArgument, "efficiency must be in (0,1]");
    if (!(leakage_fraction >= 0.0 && leakage_fraction < 1.0)) throw Error(ErrorCode::InvalidArgument, "leakage must be in [0,1)");
    if (min_voltage_v < 0.0) throw Error(ErrorCode::InvalidArgument, "minimum voltage must be >= 0");
    if (energy_j < 0.0) throw Error(ErrorCode::InvalidArgument, "energy must be >= 0");
    if (!(max_energy_j > 0.0)) throw Error(ErrorCode::InvalidArgument, "max energy must be > 0");
}

double saturation_energy_j(double capacitance_f, double parallel_resistance_ohm, double power_mw) {
    return 0.5 * capacitance_f * mw_to_w(power_mw) * parallel_resistance_ohm;
}

double capacitor_voltage(double power_mw, const EnergyBuffer& buffer, double v0, double elapsed_s) {
    require_finite(power_mw, "power");
    require_finite(v0, "v0");
    require_finite(elapsed_s, "elapsed");
    require_finite(buffer.capacitance_f, "capacitance");
    require_finite(buffer.parallel_resistance_ohm, "parallel resistance");
    if (elapsed_s < 0.0) throw Error(ErrorCode::InvalidArgument, "elapsed must be >= 0");

    const double rp = buffer.parallel_resistance_ohm;
    const double steady = mw_to_w(power_mw) * rp;  // V^2
    const double decay = std::exp(-2.0 * elapsed_s / (buffer.capacitance_f * rp));
    const double radicand = steady - decay * (steady - v0 * v0);
    if (radicand < -kRadicandTolerance) {
        throw Error(ErrorCode::NegativeRadicand, "radicand " + std::to_string(radicand));
    }
    return std::sqrt(std::max(0.0, radicand));
}

BufferFlow step_buffer(EnergyBuffer& buffer, double harvest_power_mw, double slot_s) {
    require_finite(harvest_power_mw, "harvest power");
    require_finite(slot_s, "slot");
    require_finite(buffer.energy_j, "energy");
    if (!(slot_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "slot must be > 0");
    if (harvest_power_mw < 0.0) throw Error(ErrorCode::InvalidArgument, "harvest power must be >= 0");

    BufferFlow flow;
    flow.leaked_j = buffer.leakage_fraction * buffer.energy_j;
    flow.harvested_j = buffer.efficiency * mw_to_w(harvest_power_mw) * slot_s;
    double next = buffer.energy_j - flow.leaked_j + flow.harvested_j;
    if (next > buffer.max_energy_j) {
        flow.spilled_j = next - buffer.max_energy_j;
        next = buffer.max_energy_j;
    }
    buffer.energy_j = std::max(0.0, next);
    return flow;
}

EnergyBuffer buffer_step(const EnergyBuffer& buffer, double harvest_power_mw, double slot_s) {
    EnergyBuffer next = buffer;
    step_buffer(next, harvest_power_mw, slot_s);
    return next;
}

void FederatedStore::validate() const {
    sense.validate();
    radio.validate();
    require_finite(split_high, "split_high");
    require_finite(split_low, "split_low");
    if (std::abs(split_high + split_low - 1.0) > 1e-12) {
        throw Error(ErrorCode::InvalidArgument, "split_high + split_low must equal 1");
    }
    if (!(split_high > split_low && split_low > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "require split_high > split_low > 0");
    }
}

std::pair<double, double> split_harvest(const FederatedStore& store, double harvest_power_mw,
                                        bool sense_active) {
    require_finite(harvest_power_mw, "harvest power");
    if (harvest_power_mw < 0.0) throw Error(ErrorCode::InvalidArgument, "harvest power must be >= 0");
    const double high = store.split_high * harvest_power_mw;
    // Subtraction keeps the two shares summing to the input exactly.
    const double low = harvest_power_mw - high;
    if (sense_active) return {high, low};
    const double low_first = store.split_low * harvest_power_mw;
    return {low_first, harvest_power_mw - low_first};
}

HarvesterTrace constant_trace(double power_mw, double duration_s, double interval_s) {
    if (!(interval_s > 0.0) || !(duration_s >= interval_s)) {
        throw Error(ErrorCode::InvalidArgument, "constant_trace needs duration >= interval > 0");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration_s / interval_s)) + 1;
    std::vector<TraceSample> samples(n);
    for (std::size_t i = 0; i < n; ++i) samples[i] = {static_cast<double>(i) * interval_s, power_mw};
    return HarvesterTrace(std::move(samples));
}

HarvesterTrace sinusoid_trace(double mean_mw, double amplitude_mw, double period_s,
                              double duration_s, double interval_s) {
    if (!(interval_s > 0.0) || !(duration_s >= interval_s) || !(period_s > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "sinusoid_trace needs positive period/interval");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration_s / interval_s)) + 1;
    std::vector<TraceSample> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * interval_s;
        const double p = mean_mw + amplitude_mw * std::sin(2.0 * std::numbers::pi * t / period_s);
        samples[i] = {t, std::max(0.0, p)};
    }
    return HarvesterTrace(std::move(samples));
}

HarvesterTrace intermittent_trace(const IntermittentTraceConfig& config, std::uint64_t seed,
                                  double duration_s, double interval_s) {
    if (!(interval_s > 0.0) || !(duration_s >= interval_s)) {
        throw Error(ErrorCode::InvalidArgument, "intermittent_trace needs duration >= interval > 0");
    }
    if (!(config.mean_on_s > 0.0) || !(config.mean_off_s > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "intermittent_trace needs positive dwell means");
    }
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::llround(duration_s / interval_s)) + 1;
    std::vector<TraceSample> samples(n);
    bool lit = rng.bernoulli(config.start_on_probability);
    double remaining = rng.exponential(lit ? config.mean_on_s : config.mean_off_s);
    for (std::size_t i = 0; i < n; ++i) {
        while (remaining <= 0.0) {
            lit = !lit;
            remaining += rng.exponential(lit ? config.mean_on_s : config.mean_off_s);
        }
        const double base = lit ? config.on_power_mw : config.off_power_mw;
        const double jitter = 1.0 + config.noise * rng.uniform(-1.0, 1.0);
        samples[i] = {static_cast<double>(i) * interval_s, std::max(0.0, base * jitter)};
        remaining -= interval_s;
    }
    return HarvesterTrace(std::move(samples));
}

}  // namespace blis::energy
