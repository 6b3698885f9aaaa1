#include "blis/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "blis/sim_engine.hpp"

namespace blis::metrics {

using nlohmann::json;

namespace {

struct ComponentTrack {
    bool up = false;
    SimTime since = 0;
    SimTime up_time = 0;
    std::optional<SimTime> first_up;
    bool seen = false;

    void set(bool now_up, SimTime t) {
        if (seen && up) up_time += t - since;
        if (now_up && !first_up) first_up = t;
        up = now_up;
        since = t;
        seen = true;
    }
    void close(SimTime end) {
        if (seen && up && end > since) up_time += end - since;
        since = end;
    }
};

struct AppTrack {
    AppMetrics m;
    double delay_sum = 0.0;
    std::map<std::int64_t, std::uint64_t> received_by_period;
    std::map<std::int64_t, std::uint64_t> target_by_period;
};

std::uint64_t sum(const std::vector<std::uint16_t>& v) {
    std::uint64_t s = 0;
    for (auto x : v) s += x;
    return s;
}

}  // namespace

MetricsBundle compute_metrics(const EventLog& log) {
    MetricsBundle out;
    const auto& recs = log.records();
    if (recs.empty()) return out;

    std::optional<std::size_t> start;
    for (std::size_t k = 0; k < recs.size() && !start; ++k) {
        if (recs[k].entity == "sim" && recs[k].event == "start") start = k;
    }
    if (!start) throw Error(ErrorCode::MalformedLog, "record 1: no sim start record");

    SimTime duration_us = 0;
    SimTime period_us = 0;
    {
        const DetailFields f(recs[*start].detail);
        try {
            out.scenario = std::string(f.get("name"));
            out.seed = static_cast<std::uint64_t>(f.integer("seed"));
            duration_us = f.integer("duration_us");
            period_us = f.integer("period_us");
            out.strategy = std::string(f.get("strategy"));
            out.scheme = std::string(f.get("scheme"));
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedLog, "record " + std::to_string(*start + 1) + ": " + e.what());
        }
    }
    SimTime end_us = duration_us;

    std::vector<std::string> device_order;
    std::map<std::string, std::pair<ComponentTrack, ComponentTrack>> devices;
    std::vector<int> app_order;
    std::map<int, AppTrack> apps;
    const auto app_of = [&](const std::string& entity) -> AppTrack& {
        const int id = std::stoi(entity.substr(4));
        auto [it, inserted] = apps.try_emplace(id);
        if (inserted) {
            it->second.m.app_id = id;
            app_order.push_back(id);
        }
        return it->second;
    };

    for (std::size_t k = 0; k < recs.size(); ++k) {
        const auto& r = recs[k];
        try {
            if (r.entity == "sim") {
                if (r.event == "end") end_us = r.time_us;
            } else if (r.entity.rfind("dev:", 0) == 0) {
                if (r.event != "avail") continue;
                const DetailFields f(r.detail);
                auto [it, inserted] = devices.try_emplace(r.entity);
                if (inserted) device_order.push_back(r.entity);
                const auto comp = f.get("comp");
                const bool up = f.integer("up") != 0;
                if (comp == "sense") {
                    it->second.first.set(up, r.time_us);
                } else if (comp == "radio") {
                    it->second.second.set(up, r.time_us);
                } else {
                    throw Error(ErrorCode::MalformedLog, "unknown component " + std::string(comp));
                }
            } else if (r.entity.rfind("agg:", 0) == 0) {
                auto& a = app_of(r.entity);
                if (r.event == "beacon") {
                    ++a.m.beacons;
                } else if (r.event == "solicit") {
                    ++a.m.solicited;
                } else if (r.event == "reattempt") {
                    ++a.m.reattempts;
                } else if (r.event == "lost") {
                    ++a.m.lost;
                } else if (r.event == "stale") {
                    ++a.m.stale;
                } else if (r.event == "abandoned") {
                    ++a.m.abandoned;
                } else if (r.event == "sensor_rx") {
                    const DetailFields f(r.detail);
                    ++a.m.answered;
                    a.delay_sum += f.number("delay_s");
                    ++a.received_by_period[f.integer("period")];
                } else if (r.event == "period") {
                    const DetailFields f(r.detail);
                    a.target_by_period[f.integer("index")] = sum(f.vector("targets"));
                }
            }
        } catch (const std::invalid_argument&) {
            throw Error(ErrorCode::MalformedLog, "record " + std::to_string(k + 1) + ": bad entity " + r.entity);
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedLog, "record " + std::to_string(k + 1) + ": " + e.what());
        }
    }

    out.duration_s = to_seconds(end_us);
    const double end_s = out.duration_s;
    double sense_avail = 0.0, radio_avail = 0.0, sense_init = 0.0, radio_init = 0.0;
    for (const auto& name : device_order) {
        auto& [sense, radio] = devices[name];
        DeviceMetrics d;
        d.entity = name;
        for (auto [track, metric] : {std::pair{&sense, &d.sense}, std::pair{&radio, &d.radio}}) {
            track->close(end_us);
            metric->availability = end_us > 0 ? std::clamp(static_cast<double>(track->up_time) / end_us, 0.0, 1.0) : 0.0;
            if (track->first_up && *track->first_up <= end_us) metric->initial_time_s = to_seconds(*track->first_up);
            if (!metric->initial_time_s) ++out.never_available;
        }
        sense_avail += d.sense.availability;
        radio_avail += d.radio.availability;
        sense_init += d.sense.initial_time_s.value_or(end_s);
        radio_init += d.radio.initial_time_s.value_or(end_s);
        out.devices.push_back(std::move(d));
    }
    if (!out.devices.empty()) {
        const auto n = static_cast<double>(out.devices.size());
        out.availability_sense = sense_avail / n;
        out.availability_radio = radio_avail / n;
        out.availability = 0.5 * (out.availability_sense + out.availability_radio);
        out.available_initial_time_sense_s = sense_init / n;
        out.available_initial_time_radio_s = radio_init / n;
        out.available_initial_time_s = 0.5 * (out.available_initial_time_sense_s + out.available_initial_time_radio_s);
    }

    double delay_sum = 0.0;
    const std::int64_t completed = period_us > 0 ? end_us / period_us : 0;
    for (int id : app_order) {
        auto& a = apps[id];
        const auto settled = a.m.answered + a.m.lost;
        a.m.data_loss = settled ? static_cast<double>(a.m.lost) / static_cast<double>(settled) : 0.0;
        a.m.mean_delay_s = a.m.answered ? a.delay_sum / static_cast<double>(a.m.answered) : 0.0;
        for (std::int64_t p = 0; p < completed; ++p) {
            a.m.achieved_rate.push_back(a.received_by_period.count(p) ? a.received_by_period[p] : 0);
            a.m.target_rate.push_back(a.target_by_period.count(p) ? a.target_by_period[p] : 0);
        }
        out.beacons += a.m.beacons;
        out.solicited += a.m.solicited;
        out.reattempts += a.m.reattempts;
        out.answered += a.m.answered;
        out.lost += a.m.lost;
        out.stale += a.m.stale;
        out.abandoned += a.m.abandoned;
        delay_sum += a.delay_sum;
        out.apps.push_back(a.m);
    }
    const auto settled = out.answered + out.lost;
    out.data_loss = settled ? static_cast<double>(out.lost) / static_cast<double>(settled) : 0.0;
    out.mean_packet_delay_s = out.answered ? delay_sum / static_cast<double>(out.answered) : 0.0;
    return out;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

json to_json(const MetricsBundle& m) {
    json apps = json::array();
    for (const auto& a : m.apps) {
        apps.push_back({{"app_id", a.app_id},
                        {"beacons", a.beacons},
                        {"solicited", a.solicited},
                        {"reattempts", a.reattempts},
                        {"answered", a.answered},
                        {"lost", a.lost},
                        {"stale", a.stale},
                        {"abandoned", a.abandoned},
                        {"data_loss", a.data_loss},
                        {"mean_delay_s", a.mean_delay_s},
                        {"achieved_rate", a.achieved_rate},
                        {"target_rate", a.target_rate}});
    }
    json devices = json::array();
    for (const auto& d : m.devices) {
        devices.push_back({{"entity", d.entity},
                           {"sense", {{"availability", d.sense.availability}, {"initial_time_s", opt(d.sense.initial_time_s)}}},
                           {"radio", {{"availability", d.radio.availability}, {"initial_time_s", opt(d.radio.initial_time_s)}}}});
    }
    return {{"scenario", m.scenario},
            {"seed", m.seed},
            {"strategy", m.strategy},
            {"scheme", m.scheme},
            {"duration_s", m.duration_s},
            {"data_loss", m.data_loss},
            {"mean_packet_delay_s", m.mean_packet_delay_s},
            {"availability", m.availability},
            {"availability_sense", m.availability_sense},
            {"availability_radio", m.availability_radio},
            {"available_initial_time_s", m.available_initial_time_s},
            {"available_initial_time_sense_s", m.available_initial_time_sense_s},
            {"available_initial_time_radio_s", m.available_initial_time_radio_s},
            {"never_available", m.never_available},
            {"beacons", m.beacons},
            {"solicited", m.solicited},
            {"reattempts", m.reattempts},
            {"answered", m.answered},
            {"lost", m.lost},
            {"stale", m.stale},
            {"abandoned", m.abandoned},
            {"apps", apps},
            {"devices", devices}};
}

MetricsBundle metrics_from_json(const json& j) {
    MetricsBundle m;
    j.at("scenario").get_to(m.scenario);
    j.at("seed").get_to(m.seed);
    j.at("strategy").get_to(m.strategy);
    j.at("scheme").get_to(m.scheme);
    j.at("duration_s").get_to(m.duration_s);
    j.at("data_loss").get_to(m.data_loss);
    j.at("mean_packet_delay_s").get_to(m.mean_packet_delay_s);
    j.at("availability").get_to(m.availability);
    j.at("availability_sense").get_to(m.availability_sense);
    j.at("availability_radio").get_to(m.availability_radio);
    j.at("available_initial_time_s").get_to(m.available_initial_time_s);
    j.at("available_initial_time_sense_s").get_to(m.available_initial_time_sense_s);
    j.at("available_initial_time_radio_s").get_to(m.available_initial_time_radio_s);
    j.at("never_available").get_to(m.never_available);
    j.at("beacons").get_to(m.beacons);
    j.at("solicited").get_to(m.solicited);
    j.at("reattempts").get_to(m.reattempts);
    j.at("answered").get_to(m.answered);
    j.at("lost").get_to(m.lost);
    j.at("stale").get_to(m.stale);
    j.at("abandoned").get_to(m.abandoned);
    for (const auto& a : j.at("apps")) {
        AppMetrics x;
        a.at("app_id").get_to(x.app_id);
        a.at("beacons").get_to(x.beacons);
        a.at("solicited").get_to(x.solicited);
        a.at("reattempts").get_to(x.reattempts);
        a.at("answered").get_to(x.answered);
        a.at("lost").get_to(x.lost);
        a.at("stale").get_to(x.stale);
        a.at("abandoned").get_to(x.abandoned);
        a.at("data_loss").get_to(x.data_loss);
        a.at("mean_delay_s").get_to(x.mean_delay_s);
        a.at("achieved_rate").get_to(x.achieved_rate);
        a.at("target_rate").get_to(x.target_rate);
        m.apps.push_back(std::move(x));
    }
    for (const auto& d : j.at("devices")) {
        DeviceMetrics x;
        d.at("entity").get_to(x.entity);
        x.sense.availability = d.at("sense").at("availability").get<double>();
        x.sense.initial_time_s = opt_from(d.at("sense").at("initial_time_s"));
        x.radio.availability = d.at("radio").at("availability").get<double>();
        x.radio.initial_time_s = opt_from(d.at("radio").at("initial_time_s"));
        m.devices.push_back(std::move(x));
    }
    return m;
}

Variant parse_variant(std::string_view text) {
    const auto slash = text.find('/');
    const auto strategy = atem::parse_energy_strategy(text.substr(0, slash));
    const auto scheme = slash == std::string_view::npos ? std::optional<vsda::Scheme>(vsda::Scheme::Vsda)
                                                        : vsda::parse_scheme(text.substr(slash + 1));
    if (!strategy || !scheme) {
        throw Error(ErrorCode::ConfigError,
                    "strategy '" + std::string(text) + "' must look like atem|fh|central[/vsda|polling]");
    }
    Variant v;
    v.strategy = *strategy;
    v.scheme = *scheme;
    v.label = std::string(atem::to_string(v.strategy)) + "/" + vsda::to_string(v.scheme);
    return v;
}

const std::vector<std::string>& delta_metrics() {
    static const std::vector<std::string> names = {"data_loss",          "mean_packet_delay_s",
                                                   "availability",       "availability_sense",
                                                   "availability_radio", "available_initial_time_s"};
    return names;
}

double metric_value(const MetricsBundle& m, std::string_view metric) {
    if (metric == "data_loss") return m.data_loss;
    if (metric == "mean_packet_delay_s") return m.mean_packet_delay_s;
    if (metric == "availability") return m.availability;
    if (metric == "availability_sense") return m.availability_sense;
    if (metric == "availability_radio") return m.availability_radio;
    if (metric == "available_initial_time_s") return m.available_initial_time_s;
    throw Error(ErrorCode::InvalidArgument, "unknown metric " + std::string(metric));
}

std::vector<VariantDelta> paired_deltas(const std::vector<RunRow>& rows, const std::string& baseline) {
    std::vector<std::string> scenarios, variants;
    for (const auto& r : rows) {
        if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);
        if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    }
    const auto find = [&](const std::string& s, const std::string& v, std::uint64_t seed) -> const RunRow* {
        for (const auto& r : rows) {
            if (r.scenario == s && r.variant == v && r.seed == seed) return &r;
        }
        return nullptr;
    };
    std::vector<VariantDelta> out;
    for (const auto& s : scenarios) {
        for (const auto& v : variants) {
            VariantDelta vd{s, v, baseline, {}};
            for (const auto& metric : delta_metrics()) {
                DeltaStats d;
                d.metric = metric;
                std::size_t relative_count = 0;
                for (const auto& r : rows) {
                    if (r.scenario != s || r.variant != v) continue;
                    const RunRow* base = find(s, baseline, r.seed);
                    if (!base) continue;
                    const double b = metric_value(base->metrics, metric);
                    const double delta = metric_value(r.metrics, metric) - b;
                    d.mean += delta;
                    d.min = d.pairs == 0 ? delta : std::min(d.min, delta);
                    d.max = d.pairs == 0 ? delta : std::max(d.max, delta);
                    ++d.pairs;
                    if (b != 0.0) {
                        d.mean_relative_pct += 100.0 * delta / b;
                        ++relative_count;
                    }
                }
                if (d.pairs == 0) continue;
                d.mean /= static_cast<double>(d.pairs);
                if (relative_count) d.mean_relative_pct /= static_cast<double>(relative_count);
                vd.deltas.push_back(d);
            }
            if (!vd.deltas.empty()) out.push_back(std::move(vd));
        }
    }
    return out;
}

unsigned thread_budget() {
    if (const char* env = std::getenv("BLIS_SIM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

ComparisonReport compare(const std::vector<sim::ScenarioConfig>& configs, const std::vector<Variant>& variants,
                         const std::vector<std::uint64_t>& seeds, const std::string& baseline, unsigned threads) {
    if (seeds.empty()) throw Error(ErrorCode::ConfigError, "compare needs at least one seed");
    struct Job {
        std::size_t config, variant;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        for (std::size_t v = 0; v < variants.size(); ++v) {
            for (auto seed : seeds) jobs.push_back({c, v, seed});
        }
    }
    ComparisonReport report;
    report.rows.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            try {
                const auto& job = jobs[k];
                auto cfg = configs[job.config];
                cfg.device.strategy = variants[job.variant].strategy;
                cfg.aggregator.scheme = variants[job.variant].scheme;
                const auto result = sim::run_scenario(cfg, job.seed);
                report.rows[k] = RunRow{cfg.name, variants[job.variant].label, job.seed, compute_metrics(result.log)};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned n = std::min<unsigned>(threads ? threads : thread_budget(), static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    report.deltas = paired_deltas(report.rows, baseline);
    return report;
}

json to_json(const ComparisonReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"scenario", row.scenario}, {"variant", row.variant}, {"seed", row.seed}, {"metrics", to_json(row.metrics)}});
    }
    json deltas = json::array();
    for (const auto& vd : r.deltas) {
        json ds = json::array();
        for (const auto& d : vd.deltas) {
            ds.push_back({{"metric", d.metric},
                          {"mean", d.mean},
                          {"min", d.min},
                          {"max", d.max},
                          {"mean_relative_pct", d.mean_relative_pct},
                          {"pairs", d.pairs}});
        }
        deltas.push_back({{"scenario", vd.scenario}, {"variant", vd.variant}, {"baseline", vd.baseline}, {"deltas", ds}});
    }
    const auto& t = r.reference;
    return {{"schema_version", kSchemaVersion},
            {"rows", rows},
            {"deltas", deltas},
            {"reference_targets",
             {{"availability_gain_pct", t.availability_gain_pct},
              {"initial_time_gain_s", t.initial_time_gain_s},
              {"data_loss_reduction_pct", t.data_loss_reduction_pct},
              {"delay_reduction_pct", t.delay_reduction_pct},
              {"alpha_outdoor", t.alpha_outdoor},
              {"alpha_mobile", t.alpha_mobile},
              {"forecast_rmse_mw", t.forecast_rmse_mw}}}};
}

ComparisonReport report_from_json(const json& j) {
    ComparisonReport r;
    for (const auto& row : j.at("rows")) {
        r.rows.push_back(RunRow{row.at("scenario").get<std::string>(), row.at("variant").get<std::string>(),
                                row.at("seed").get<std::uint64_t>(), metrics_from_json(row.at("metrics"))});
    }
    for (const auto& vd : j.at("deltas")) {
        VariantDelta x{vd.at("scenario").get<std::string>(), vd.at("variant").get<std::string>(),
                       vd.at("baseline").get<std::string>(), {}};
        for (const auto& d : vd.at("deltas")) {
            x.deltas.push_back(DeltaStats{d.at("metric").get<std::string>(), d.at("mean").get<double>(),
                                          d.at("min").get<double>(), d.at("max").get<double>(),
                                          d.at("mean_relative_pct").get<double>(), d.at("pairs").get<std::size_t>()});
        }
        r.deltas.push_back(std::move(x));
    }
    const auto& t = j.at("reference_targets");
    t.at("availability_gain_pct").get_to(r.reference.availability_gain_pct);
    t.at("initial_time_gain_s").get_to(r.reference.initial_time_gain_s);
    t.at("data_loss_reduction_pct").get_to(r.reference.data_loss_reduction_pct);
    t.at("delay_reduction_pct").get_to(r.reference.delay_reduction_pct);
    t.at("alpha_outdoor").get_to(r.reference.alpha_outdoor);
    t.at("alpha_mobile").get_to(r.reference.alpha_mobile);
    t.at("forecast_rmse_mw").get_to(r.reference.forecast_rmse_mw);
    return r;
}

std::string runs_csv_header() {
    return "schema_version,scenario,variant,strategy,scheme,seed,duration_s,data_loss,mean_packet_delay_s,"
           "availability,availability_sense,availability_radio,available_initial_time_s,"
           "available_initial_time_sense_s,available_initial_time_radio_s,never_available,beacons,solicited,"
           "reattempts,answered,lost,stale,abandoned";
}

namespace {

std::string num(double v) { return format_double(v); }
std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : "never"; }

class CsvFile {
public:
    CsvFile(const std::filesystem::path& path, const std::string& header) : path_(path), out_(path) {
        if (!out_) throw Error(ErrorCode::IoError, "cannot write " + path.string());
        out_ << header << '\n';
    }
    template <class... Cells>
    void row(const Cells&... cells) {
        std::size_t k = 0;
        ((out_ << (k++ ? "," : "") << cells), ...);
        out_ << '\n';
    }
    void close() {
        out_.close();
        if (!out_) throw Error(ErrorCode::IoError, "failed writing " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

void write_svg(const std::filesystem::path& path, const std::string& metric,
               const std::vector<std::pair<std::string, double>>& bars) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    const int bar_h = 22, gap = 8, left = 260, width = 420;
    const int height = 40 + static_cast<int>(bars.size()) * (bar_h + gap);
    double top = 0.0;
    for (const auto& b : bars) top = std::max(top, std::abs(b.second));
    if (top <= 0.0) top = 1.0;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 120 << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<text x=\"10\" y=\"20\" font-size=\"14\">" << metric << " (mean over seeds)</text>\n";
    int y = 34;
    for (const auto& [label, value] : bars) {
        const int w = static_cast<int>(width * std::abs(value) / top);
        out << "<text x=\"10\" y=\"" << y + 15 << "\">" << label << "</text>\n";
        out << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << bar_h
            << "\" fill=\"#4a7ab5\"/>\n";
        out << "<text x=\"" << left + w + 6 << "\" y=\"" << y + 15 << "\">" << format_double(value) << "</text>\n";
        y += bar_h + gap;
    }
    out << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> emit_outputs(const ComparisonReport& report, Format format,
                                                const std::filesystem::path& out_dir, bool plots) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    const auto v = kSchemaVersion;

    if (format == Format::Json) {
        const auto path = out_dir / "report.json";
        std::ofstream out(path);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
        out << to_json(report).dump(2) << '\n';
        if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
        written.push_back(path);
    } else {
        CsvFile runs(out_dir / "runs.csv", runs_csv_header());
        CsvFile apps(out_dir / "apps.csv",
                     "schema_version,scenario,variant,seed,app_id,beacons,solicited,reattempts,answered,lost,stale,abandoned,"
                     "data_loss,mean_delay_s,periods,achieved_rate_mean,target_rate_mean");
        CsvFile devices(out_dir / "devices.csv",
                        "schema_version,scenario,variant,seed,device,sense_availability,sense_initial_time_s,"
                        "radio_availability,radio_initial_time_s");
        for (const auto& r : report.rows) {
            const auto& m = r.metrics;
            runs.row(v, r.scenario, r.variant, m.strategy, m.scheme, r.seed, num(m.duration_s), num(m.data_loss),
                     num(m.mean_packet_delay_s), num(m.availability), num(m.availability_sense),
                     num(m.availability_radio), num(m.available_initial_time_s),
                     num(m.available_initial_time_sense_s), num(m.available_initial_time_radio_s), m.never_available,
                     m.beacons, m.solicited, m.reattempts, m.answered, m.lost, m.stale, m.abandoned);
            for (const auto& a : m.apps) {
                const auto mean = [](const std::vector<std::uint64_t>& xs) {
                    double s = 0.0;
                    for (auto x : xs) s += static_cast<double>(x);
                    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
                };
                apps.row(v, r.scenario, r.variant, r.seed, a.app_id, a.beacons, a.solicited, a.reattempts, a.answered,
                         a.lost, a.stale, a.abandoned, num(a.data_loss), num(a.mean_delay_s), a.achieved_rate.size(),
                         num(mean(a.achieved_rate)), num(mean(a.target_rate)));
            }
            for (const auto& d : m.devices) {
                devices.row(v, r.scenario, r.variant, r.seed, d.entity, num(d.sense.availability),
                            opt_num(d.sense.initial_time_s), num(d.radio.availability), opt_num(d.radio.initial_time_s));
            }
        }
        runs.close();
        apps.close();
        devices.close();
        CsvFile deltas(out_dir / "deltas.csv", "schema_version,scenario,variant,baseline,metric,pairs,mean,min,max,mean_relative_pct");
        for (const auto& vd : report.deltas) {
            for (const auto& d : vd.deltas) {
                deltas.row(v, vd.scenario, vd.variant, vd.baseline, d.metric, d.pairs, num(d.mean), num(d.min),
                           num(d.max), num(d.mean_relative_pct));
            }
        }
        deltas.close();
        CsvFile refs(out_dir / "reference_targets.csv", "schema_version,target,value");
        const auto& t = report.reference;
        refs.row(v, "availability_gain_pct", num(t.availability_gain_pct));
        refs.row(v, "initial_time_gain_s", num(t.initial_time_gain_s));
        refs.row(v, "data_loss_reduction_pct", num(t.data_loss_reduction_pct));
        refs.row(v, "delay_reduction_pct", num(t.delay_reduction_pct));
        refs.row(v, "alpha_outdoor", num(t.alpha_outdoor));
        refs.row(v, "alpha_mobile", num(t.alpha_mobile));
        refs.row(v, "forecast_rmse_mw", num(t.forecast_rmse_mw));
        refs.close();
        for (const char* f : {"runs.csv", "apps.csv", "devices.csv", "deltas.csv", "reference_targets.csv"}) {
            written.push_back(out_dir / f);
        }
    }

    if (plots) {
        for (const auto& metric : delta_metrics()) {
            std::vector<std::pair<std::string, double>> bars;
            std::map<std::string, std::pair<double, int>> acc;
            for (const auto& r : report.rows) {
                const auto key = r.scenario + " " + r.variant;
                if (!acc.count(key)) bars.emplace_back(key, 0.0);
                auto& [s, n] = acc[key];
                s += metric_value(r.metrics, metric);
                ++n;
            }
            for (auto& [label, value] : bars) value = acc[label].first / acc[label].second;
            const auto path = out_dir / (metric + ".svg");
            write_svg(path, metric, bars);
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace blis::metrics
