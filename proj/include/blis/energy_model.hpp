#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <utility>
#include <vector>

#include "blis/common.hpp"

namespace blis::energy {

struct TraceSample {
    double time_s;
    double power_mw;
};

/// Uniformly sampled ambient harvesting power, held constant between samples.
class HarvesterTrace {
public:
    HarvesterTrace() = default;
    /// Validates ordering, spacing and non-negativity; throws Error(InvalidArgument).
    explicit HarvesterTrace(std::vector<TraceSample> samples);

    const std::vector<TraceSample>& samples() const { return samples_; }
    double sample_interval_s() const { return interval_s_; }
    double start_s() const { return samples_.empty() ? 0.0 : samples_.front().time_s; }
    double end_s() const { return samples_.empty() ? 0.0 : samples_.back().time_s; }
    double peak_power_mw() const { return peak_mw_; }
    bool empty() const { return samples_.empty(); }
    std::size_t size() const { return samples_.size(); }

    /// Zero-order hold lookup. Throws OutOfRange outside [start, end].
    double power_at(double t_s) const;

    HarvesterTrace scaled(double factor) const;
    std::vector<double> powers() const;

private:
    std::vector<TraceSample> samples_;
    double interval_s_ = 0.0;
    double peak_mw_ = 0.0;
};

double trace_power_at(const HarvesterTrace& trace, double t_s);

HarvesterTrace parse_trace_csv(std::istream& in);
HarvesterTrace load_trace_csv(const std::filesystem::path& path);
void write_trace_csv(std::ostream& out, const HarvesterTrace& trace);

/// One capacitor. Energy is the state variable; voltage is derived from it.
struct EnergyBuffer {
    double capacitance_f = 47e-6;
    double parallel_resistance_ohm = 10e3;
    double efficiency = 0.9;
    double leakage_fraction = 0.01;  // per slot
    double min_voltage_v = 0.0;      // energy held below this voltage cannot power a load
    double max_energy_j = std::numeric_limits<double>::infinity();
    double energy_j = 0.0;

    double voltage_v() const;
    double reserve_energy_j() const { return 0.5 * capacitance_f * min_voltage_v * min_voltage_v; }
    double usable_energy_j() const;
    void validate() const;
};

/// Energy stored by a capacitor at its steady-state voltage sqrt(P*r_p).
double saturation_energy_j(double capacitance_f, double parallel_resistance_ohm, double power_mw);

/// Continuous charging of a parallel RC harvester circuit.
double capacitor_voltage(double power_mw, const EnergyBuffer& buffer, double v0, double elapsed_s);

struct BufferFlow {
    double harvested_j = 0.0;  // efficiency * P * t
    double leaked_j = 0.0;
    double spilled_j = 0.0;  // discarded above the saturation cap
};

/// Slotted update E(n+1) = (1 - sigma) E(n) + eta P t, clipped at max_energy_j.
EnergyBuffer buffer_step(const EnergyBuffer& buffer, double harvest_power_mw, double slot_s);

/// In-place variant of buffer_step that reports where the energy went.
BufferFlow step_buffer(EnergyBuffer& buffer, double harvest_power_mw, double slot_s);

struct FederatedStore {
    EnergyBuffer sense;  // MCU and sensing
    EnergyBuffer radio;  // transmit and receive
    double split_high = 0.7;
    double split_low = 0.3;

    void validate() const;
};

/// Returns (sense share, radio share) of the harvested power in mW.
std::pair<double, double> split_harvest(const FederatedStore& store, double harvest_power_mw,
                                        bool sense_active);

// Synthetic harvester traces for experiments and tests.

HarvesterTrace constant_trace(double power_mw, double duration_s, double interval_s);

HarvesterTrace sinusoid_trace(double mean_mw, double amplitude_mw, double period_s,
                              double duration_s, double interval_s);

/// Two-state (lit / shadowed) Markov-modulated trace with mild multiplicative
/// noise, a stand-in for outdoor or mobile solar harvesting.
struct IntermittentTraceConfig {
    double on_power_mw = 1.5;
    double off_power_mw = 0.02;
    double mean_on_s = 120.0;
    double mean_off_s = 60.0;
    double noise = 0.1;
    double start_on_probability = 0.5;
};

HarvesterTrace intermittent_trace(const IntermittentTraceConfig& config, std::uint64_t seed,
                                  double duration_s, double interval_s);

}  // namespace blis::energy
