#include "blis/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace blis::sim {

using nlohmann::json;

const char* to_string(LpMode m) { return m == LpMode::Scale ? "scale" : "clamp"; }

const char* to_string(TraceKind k) {
    switch (k) {
        case TraceKind::Constant: return "constant";
        case TraceKind::Sinusoid: return "sinusoid";
        case TraceKind::Intermittent: return "intermittent";
        case TraceKind::Csv: return "csv";
    }
    return "?";
}

const char* to_string(EstimatorKind k) { return k == EstimatorKind::Oracle ? "oracle" : "forecast"; }

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, path + ": " + msg);
}

// Field access with JSON-path error messages; unknown keys are rejected.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    template <class T>
    T get(const char* key, T fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return fallback;
        try {
            return it->get<T>();
        } catch (const json::exception&) {
            fail(field(key), "wrong type");
        }
    }

    double number(const char* key, double fallback) {
        const double v = get<double>(key, fallback);
        if (!std::isfinite(v)) fail(field(key), "must be finite");
        return v;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string field(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(path_ + "." + it.key(), "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

DeviceState parse_state(const std::string& s, const std::string& path) {
    if (s == "LP") return DeviceState::LowPower;
    if (s == "NML") return DeviceState::Normal;
    fail(path, "state must be LP or NML");
}

AppSpec parse_app(const json& j, const std::string& path, double period_s) {
    Reader r(j, path);
    AppSpec a;
    a.app_id = r.get<int>("app_id", 1);
    a.module_count = r.get<int>("modules", 1);
    a.rate_nml = r.get<std::uint16_t>("rate_nml", 10);
    a.rate_lp = r.get<std::uint16_t>("rate_lp", 5);
    a.sensors_per_module = r.get<std::vector<int>>("sensors_per_module", {});
    a.period_us = from_seconds(period_s);
    r.finish();
    try {
        a.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return a;
}

atem::TaskCost parse_cost(const json& j, const std::string& path, atem::TaskCost fallback) {
    Reader r(j, path);
    atem::TaskCost c;
    c.duration_us = r.get<SimTime>("duration_us", fallback.duration_us);
    c.energy_j = uj_to_j(r.number("energy_uj", j_to_uj(fallback.energy_j)));
    r.finish();
    if (c.duration_us <= 0 || !(c.energy_j > 0.0)) fail(path, "duration and energy must be > 0");
    return c;
}

}  // namespace

std::vector<AppSpec> table1_apps(double period_s) {
    const int rows[3][3] = {{2, 10, 5}, {4, 16, 8}, {5, 20, 10}};
    std::vector<AppSpec> apps;
    for (int i = 0; i < 3; ++i) {
        AppSpec a;
        a.app_id = i + 1;
        a.module_count = rows[i][0];
        a.rate_nml = static_cast<std::uint16_t>(rows[i][1]);
        a.rate_lp = static_cast<std::uint16_t>(rows[i][2]);
        a.period_us = from_seconds(period_s);
        apps.push_back(a);
    }
    return apps;
}

std::size_t ScenarioConfig::device_count() const {
    std::size_t n = 0;
    for (const auto& a : apps) n += static_cast<std::size_t>(a.module_count);
    return n;
}

void ScenarioConfig::validate() const {
    if (!(duration_s > 0.0)) fail("$.duration_s", "must be > 0");
    if (!(slot_s > 0.0)) fail("$.slot_s", "must be > 0");
    if (!(period_s > 0.0)) fail("$.period_s", "must be > 0");
    if (!(lp_fraction >= 0.0 && lp_fraction <= 1.0)) fail("$.lp_fraction", "must be in [0,1]");
    if (!(lp_target_fraction > 0.0)) fail("$.lp_target_fraction", "must be > 0");
    if (!(nml_target_fraction > 1.0)) fail("$.nml_target_fraction", "must be > 1");
    if (!(initial_charge >= 0.0 && initial_charge <= 1.0)) fail("$.device.initial_charge", "must be in [0,1]");
    if (propagation_delay_us < 0) fail("$.radio.propagation_delay_us", "must be >= 0");
    if (actuator_every_n_beacons < 0) fail("$.actuator.every_n_beacons", "must be >= 0");
    if (trace.kind != TraceKind::Csv) {
        if (!(trace.interval_s > 0.0)) fail("$.trace.interval_s", "must be > 0");
        const double ratio = trace.interval_s / slot_s;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0 - 1e-9) {
            fail("$.slot_s", "must divide the trace sample interval");
        }
    }
    std::set<int> ids;
    for (const auto& a : apps) {
        if (!ids.insert(a.app_id).second) fail("$.apps", "duplicate app_id " + std::to_string(a.app_id));
    }
    const auto check_module = [&](int app_id, int module, const std::string& path) {
        for (const auto& a : apps) {
            if (a.app_id == app_id) {
                if (module < 0 || module >= a.module_count) fail(path, "module outside application");
                return;
            }
        }
        fail(path, "unknown app_id " + std::to_string(app_id));
    };
    for (std::size_t k = 0; k < forced_off.size(); ++k) {
        const auto path = "$.forced_off[" + std::to_string(k) + "]";
        check_module(forced_off[k].app_id, forced_off[k].module, path);
        if (!(forced_off[k].to_s > forced_off[k].from_s)) fail(path, "to_s must exceed from_s");
    }
    for (std::size_t k = 0; k < clamps.size(); ++k) {
        check_module(clamps[k].app_id, clamps[k].module, "$.clamp[" + std::to_string(k) + "]");
    }
    try {
        device.validate();
        aggregator.validate();
        if (forecaster == forecast::ModelKind::Lstm) lstm.validate();
    } catch (const Error& e) {
        fail("$", e.what());
    }
}

ScenarioConfig parse_scenario(const json& j, const std::filesystem::path& base_dir) {
    ScenarioConfig c;
    Reader r(j, "$");
    c.name = r.get<std::string>("name", c.name);
    c.seed = r.get<std::uint64_t>("seed", c.seed);
    c.duration_s = r.number("duration_s", c.duration_s);
    c.slot_s = r.number("slot_s", c.slot_s);
    c.period_s = r.number("period_s", c.period_s);
    c.lp_fraction = r.number("lp_fraction", c.lp_fraction);
    c.lp_target_fraction = r.number("lp_target_fraction", c.lp_target_fraction);
    c.nml_target_fraction = r.number("nml_target_fraction", c.nml_target_fraction);
    const auto lp_mode = r.get<std::string>("lp_mode", "scale");
    if (lp_mode == "scale") {
        c.lp_mode = LpMode::Scale;
    } else if (lp_mode == "clamp") {
        c.lp_mode = LpMode::Clamp;
    } else {
        fail("$.lp_mode", "must be scale or clamp");
    }

    if (const json* apps = r.child("apps")) {
        if (apps->is_string() && apps->get<std::string>() == "table1") {
            c.apps = table1_apps(c.period_s);
        } else if (apps->is_array()) {
            for (std::size_t k = 0; k < apps->size(); ++k) {
                c.apps.push_back(parse_app((*apps)[k], "$.apps[" + std::to_string(k) + "]", c.period_s));
            }
        } else {
            fail("$.apps", "expected an array or \"table1\"");
        }
    } else {
        c.apps = table1_apps(c.period_s);
    }

    if (const json* t = r.child("trace")) {
        Reader tr(*t, "$.trace");
        const auto kind = tr.get<std::string>("kind", "intermittent");
        if (kind == "constant") {
            c.trace.kind = TraceKind::Constant;
        } else if (kind == "sinusoid") {
            c.trace.kind = TraceKind::Sinusoid;
        } else if (kind == "intermittent") {
            c.trace.kind = TraceKind::Intermittent;
        } else if (kind == "csv") {
            c.trace.kind = TraceKind::Csv;
        } else {
            fail("$.trace.kind", "must be constant, sinusoid, intermittent or csv");
        }
        auto& ts = c.trace;
        ts.interval_s = tr.number("interval_s", ts.interval_s);
        ts.power_mw = tr.number("power_mw", ts.power_mw);
        ts.mean_mw = tr.number("mean_mw", ts.mean_mw);
        ts.amplitude_mw = tr.number("amplitude_mw", ts.amplitude_mw);
        ts.period_s = tr.number("period_s", ts.period_s);
        auto& ic = ts.intermittent;
        ic.on_power_mw = tr.number("on_power_mw", ic.on_power_mw);
        ic.off_power_mw = tr.number("off_power_mw", ic.off_power_mw);
        ic.mean_on_s = tr.number("mean_on_s", ic.mean_on_s);
        ic.mean_off_s = tr.number("mean_off_s", ic.mean_off_s);
        ic.noise = tr.number("noise", ic.noise);
        ic.start_on_probability = tr.number("start_on_probability", ic.start_on_probability);
        const auto path = tr.get<std::string>("path", "");
        if (!path.empty()) ts.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base_dir / path;
        if (ts.kind == TraceKind::Csv && path.empty()) fail("$.trace.path", "required for csv traces");
        tr.finish();
    }

    if (const json* d = r.child("device")) {
        Reader dr(*d, "$.device");
        auto& dev = c.device;
        const auto strategy = dr.get<std::string>("strategy", "atem");
        const auto parsed = atem::parse_energy_strategy(strategy);
        if (!parsed) fail("$.device.strategy", "must be atem, fh or central");
        dev.strategy = *parsed;
        auto& s = dev.store;
        s.sense.capacitance_f = dr.number("c_sense_uf", s.sense.capacitance_f * 1e6) * 1e-6;
        s.radio.capacitance_f = dr.number("c_radio_uf", s.radio.capacitance_f * 1e6) * 1e-6;
        const double rp = dr.number("r_p_ohm", s.sense.parallel_resistance_ohm);
        const double eta = dr.number("efficiency", s.sense.efficiency);
        const double sigma = dr.number("leakage", s.sense.leakage_fraction);
        const double vmin = dr.number("min_voltage_v", s.sense.min_voltage_v);
        for (auto* b : {&s.sense, &s.radio}) {
            b->parallel_resistance_ohm = rp;
            b->efficiency = eta;
            b->leakage_fraction = sigma;
            b->min_voltage_v = vmin;
        }
        s.split_high = dr.number("split_high", s.split_high);
        s.split_low = dr.number("split_low", s.split_low);
        dev.energy_threshold_j = uj_to_j(dr.number("energy_threshold_uj", 0.0));
        c.initial_charge = dr.number("initial_charge", c.initial_charge);
        if (const json* ctl = dr.child("control")) dev.costs.control = parse_cost(*ctl, "$.device.control", dev.costs.control);
        if (const json* lg = dr.child("log")) dev.costs.log = parse_cost(*lg, "$.device.log", dev.costs.log);
        dr.finish();
    }

    if (const json* a = r.child("aggregator")) {
        Reader ar(*a, "$.aggregator");
        auto& agg = c.aggregator;
        const auto scheme = vsda::parse_scheme(ar.get<std::string>("scheme", "vsda"));
        if (!scheme) fail("$.aggregator.scheme", "must be vsda or polling");
        agg.scheme = *scheme;
        agg.reattempt_limit = ar.get<int>("reattempt_limit", agg.reattempt_limit);
        agg.keep_alive = ar.get<bool>("keep_alive", agg.keep_alive);
        agg.skip_lp = ar.get<bool>("skip_lp", agg.skip_lp);
        agg.initial_alpha = ar.number("initial_alpha", agg.initial_alpha);
        agg.alpha_horizon = ar.get<std::size_t>("alpha_horizon", agg.alpha_horizon);
        const auto estimator = ar.get<std::string>("estimator", "forecast");
        if (estimator == "oracle") {
            c.estimator = EstimatorKind::Oracle;
        } else if (estimator == "forecast") {
            c.estimator = EstimatorKind::Forecast;
        } else {
            fail("$.aggregator.estimator", "must be oracle or forecast");
        }
        const auto model = forecast::parse_model_kind(ar.get<std::string>("forecaster", "ewma"));
        if (!model) fail("$.aggregator.forecaster", "must be lstm, ewma or persistence");
        c.forecaster = *model;
        c.ewma_beta = ar.number("ewma_beta", c.ewma_beta);
        if (const json* l = ar.child("lstm")) {
            Reader lr(*l, "$.aggregator.lstm");
            c.lstm.epochs = lr.get<int>("epochs", c.lstm.epochs);
            c.lstm.window = lr.get<int>("window", c.lstm.window);
            c.lstm.hidden_size = lr.get<int>("hidden_size", c.lstm.hidden_size);
            c.lstm.learning_rate = lr.number("learning_rate", c.lstm.learning_rate);
            c.lstm.batch_size = lr.get<int>("batch_size", c.lstm.batch_size);
            c.lstm.seed = lr.get<std::uint64_t>("seed", c.lstm.seed);
            c.lstm_max_samples = lr.get<std::size_t>("max_samples", c.lstm_max_samples);
            lr.finish();
        }
        ar.finish();
    }

    if (const json* radio = r.child("radio")) {
        Reader rr(*radio, "$.radio");
        c.propagation_delay_us = rr.get<SimTime>("propagation_delay_us", c.propagation_delay_us);
        rr.finish();
    }
    if (const json* act = r.child("actuator")) {
        Reader ac(*act, "$.actuator");
        c.actuator_every_n_beacons = ac.get<int>("every_n_beacons", 0);
        ac.finish();
    }
    if (const json* fo = r.child("forced_off")) {
        if (!fo->is_array()) fail("$.forced_off", "expected an array");
        for (std::size_t k = 0; k < fo->size(); ++k) {
            Reader w((*fo)[k], "$.forced_off[" + std::to_string(k) + "]");
            ForcedOff f;
            f.app_id = w.get<int>("app_id", 1);
            f.module = w.get<int>("module", 0);
            f.from_s = w.number("from_s", 0.0);
            f.to_s = w.number("to_s", 0.0);
            w.finish();
            c.forced_off.push_back(f);
        }
    }
    if (const json* cl = r.child("clamp")) {
        if (!cl->is_array()) fail("$.clamp", "expected an array");
        for (std::size_t k = 0; k < cl->size(); ++k) {
            const auto path = "$.clamp[" + std::to_string(k) + "]";
            Reader w((*cl)[k], path);
            StateClamp s;
            s.app_id = w.get<int>("app_id", 1);
            s.module = w.get<int>("module", 0);
            s.state = parse_state(w.get<std::string>("state", "LP"), path + ".state");
            w.finish();
            c.clamps.push_back(s);
        }
    }
    r.finish();
    c.validate();
    return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    return parse_scenario(j, path.parent_path());
}

json to_json(const ScenarioConfig& c) {
    json apps = json::array();
    for (const auto& a : c.apps) {
        apps.push_back({{"app_id", a.app_id},
                        {"modules", a.module_count},
                        {"rate_nml", a.rate_nml},
                        {"rate_lp", a.rate_lp},
                        {"sensors_per_module", a.sensors_per_module}});
    }
    const auto& ic = c.trace.intermittent;
    json trace = {{"kind", to_string(c.trace.kind)}, {"interval_s", c.trace.interval_s}};
    switch (c.trace.kind) {
        case TraceKind::Constant: trace["power_mw"] = c.trace.power_mw; break;
        case TraceKind::Sinusoid:
            trace["mean_mw"] = c.trace.mean_mw;
            trace["amplitude_mw"] = c.trace.amplitude_mw;
            trace["period_s"] = c.trace.period_s;
            break;
        case TraceKind::Intermittent:
            trace["on_power_mw"] = ic.on_power_mw;
            trace["off_power_mw"] = ic.off_power_mw;
            trace["mean_on_s"] = ic.mean_on_s;
            trace["mean_off_s"] = ic.mean_off_s;
            trace["noise"] = ic.noise;
            trace["start_on_probability"] = ic.start_on_probability;
            break;
        case TraceKind::Csv: trace["path"] = c.trace.path.string(); break;
    }
    const auto& s = c.device.store;
    json device = {{"strategy", atem::to_string(c.device.strategy)},
                   {"c_sense_uf", s.sense.capacitance_f * 1e6},
                   {"c_radio_uf", s.radio.capacitance_f * 1e6},
                   {"r_p_ohm", s.sense.parallel_resistance_ohm},
                   {"efficiency", s.sense.efficiency},
                   {"leakage", s.sense.leakage_fraction},
                   {"min_voltage_v", s.sense.min_voltage_v},
                   {"split_high", s.split_high},
                   {"split_low", s.split_low},
                   {"energy_threshold_uj", j_to_uj(c.device.threshold_j())},
                   {"initial_charge", c.initial_charge}};
    json aggregator = {{"scheme", vsda::to_string(c.aggregator.scheme)},
                       {"reattempt_limit", c.aggregator.reattempt_limit},
                       {"keep_alive", c.aggregator.keep_alive},
                       {"skip_lp", c.aggregator.skip_lp},
                       {"initial_alpha", c.aggregator.initial_alpha},
                       {"alpha_horizon", c.aggregator.alpha_horizon},
                       {"estimator", to_string(c.estimator)},
                       {"forecaster", forecast::to_string(c.forecaster)},
                       {"ewma_beta", c.ewma_beta}};
    json forced = json::array();
    for (const auto& f : c.forced_off) {
        forced.push_back({{"app_id", f.app_id}, {"module", f.module}, {"from_s", f.from_s}, {"to_s", f.to_s}});
    }
    json clamps = json::array();
    for (const auto& k : c.clamps) {
        clamps.push_back({{"app_id", k.app_id}, {"module", k.module}, {"state", protocol::to_string(k.state)}});
    }
    return {{"name", c.name},
            {"seed", c.seed},
            {"duration_s", c.duration_s},
            {"slot_s", c.slot_s},
            {"period_s", c.period_s},
            {"lp_fraction", c.lp_fraction},
            {"lp_mode", to_string(c.lp_mode)},
            {"lp_target_fraction", c.lp_target_fraction},
            {"nml_target_fraction", c.nml_target_fraction},
            {"apps", apps},
            {"trace", trace},
            {"device", device},
            {"aggregator", aggregator},
            {"radio", {{"propagation_delay_us", c.propagation_delay_us}}},
            {"actuator", {{"every_n_beacons", c.actuator_every_n_beacons}}},
            {"forced_off", forced},
            {"clamp", clamps}};
}

}  // namespace blis::sim
