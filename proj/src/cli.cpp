#include "blis/cli.hpp"

#include <glob.h>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "CLI11.hpp"

#include "blis/forecaster.hpp"
#include "blis/metrics.hpp"
#include "blis/protocol.hpp"
#include "blis/scenario.hpp"
#include "blis/sim_engine.hpp"

namespace blis::cli {

namespace {

std::uint64_t parse_u64(std::string_view s, std::string_view whole) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::ConfigError, "bad seed list '" + std::string(whole) + "'");
    }
    return v;
}

// Errors raised before anything runs are the caller's fault.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class F>
auto input_stage(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw InputError(e.what());
    }
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        auto item = text.substr(pos, comma - pos);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        const auto dash = item.find('-');
        if (dash == std::string_view::npos) {
            seeds.push_back(parse_u64(item, text));
        } else {
            const auto lo = parse_u64(item.substr(0, dash), text);
            const auto hi = parse_u64(item.substr(dash + 1), text);
            if (hi < lo || hi - lo > 1000000) throw Error(ErrorCode::ConfigError, "bad seed range '" + std::string(item) + "'");
            for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        }
        pos = comma + 1;
    }
    if (seeds.empty()) throw Error(ErrorCode::ConfigError, "empty seed list");
    return seeds;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    std::vector<std::string> out;
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    if (rc == 0) {
        for (std::size_t k = 0; k < g.gl_pathc; ++k) out.emplace_back(g.gl_pathv[k]);
    }
    globfree(&g);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "csv";
    bool plot = false;
};

struct CompareArgs {
    std::string configs;
    std::string seeds = "1";
    std::string strategies = "central/vsda,fh/vsda,atem/vsda,atem/polling";
    std::string baseline;
    std::string out = "compare_out";
    std::string format = "csv";
    bool plot = false;
    unsigned threads = 0;
};

struct ForecastArgs {
    std::string trace;
    std::string model = "lstm";
    int epochs = 400;
    int window = 10;
    int hidden = 32;
    std::uint64_t seed = 1;
    double beta = 0.5;
    std::string out;
    std::string loss_out;
};

metrics::Format format_of(const std::string& s) { return s == "json" ? metrics::Format::Json : metrics::Format::Csv; }

int do_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
    const auto config = input_stage([&] { return sim::load_scenario(a.config); });
    const std::uint64_t seed = a.seed.value_or(config.seed);

    auto result = sim::run_scenario(config, seed);
    metrics::ComparisonReport report;
    const auto bundle = metrics::compute_metrics(result.log);
    report.rows.push_back({config.name, std::string(atem::to_string(config.device.strategy)) + "/" +
                                            vsda::to_string(config.aggregator.scheme),
                           seed, bundle});
    auto files = metrics::emit_outputs(report, format_of(a.format), a.out, a.plot);
    {
        const auto path = std::filesystem::path(a.out) / "events.csv";
        std::ofstream log(path);
        if (!log) throw Error(ErrorCode::IoError, "cannot write " + path.string());
        result.log.write(log);
        files.push_back(path);
    }
    out << "scenario " << bundle.scenario << " seed " << seed << "\n"
        << "  data_loss            " << format_double(bundle.data_loss) << "\n"
        << "  mean_packet_delay_s  " << format_double(bundle.mean_packet_delay_s) << "\n"
        << "  availability         " << format_double(bundle.availability) << "\n"
        << "  available_initial_s  " << format_double(bundle.available_initial_time_s) << "\n";
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
    if (result.stats.aborted) {
        err << "run aborted: " << result.stats.abort_reason << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int do_compare(const CompareArgs& a, std::ostream& out, std::ostream&) {
    auto [configs, variants, seeds] = input_stage([&] {
        const auto paths = expand_glob(a.configs);
        if (paths.empty()) throw Error(ErrorCode::ConfigError, "no config matches '" + a.configs + "'");
        std::vector<sim::ScenarioConfig> cs;
        for (const auto& p : paths) cs.push_back(sim::load_scenario(p));
        std::vector<metrics::Variant> vs;
        std::string_view list = a.strategies;
        while (!list.empty()) {
            const auto comma = std::min(list.find(','), list.size());
            vs.push_back(metrics::parse_variant(list.substr(0, comma)));
            list.remove_prefix(std::min(comma + 1, list.size()));
        }
        if (vs.empty()) throw Error(ErrorCode::ConfigError, "no strategies given");
        return std::tuple{cs, vs, parse_seed_list(a.seeds)};
    });
    const std::string baseline =
        a.baseline.empty() ? variants.front().label : input_stage([&] { return metrics::parse_variant(a.baseline).label; });
    if (std::none_of(variants.begin(), variants.end(), [&](const auto& v) { return v.label == baseline; })) {
        throw InputError("baseline " + baseline + " is not among the strategies");
    }
    const unsigned threads = a.threads ? std::min(a.threads, metrics::thread_budget()) : metrics::thread_budget();

    const auto report = metrics::compare(configs, variants, seeds, baseline, threads);
    const auto files = metrics::emit_outputs(report, format_of(a.format), a.out, a.plot);
    out << report.rows.size() << " runs, baseline " << baseline << "\n";
    for (const auto& vd : report.deltas) {
        if (vd.variant == baseline) continue;
        out << vd.scenario << "  " << vd.variant << " - " << vd.baseline << "\n";
        for (const auto& d : vd.deltas) {
            out << "  " << std::left << std::setw(26) << d.metric << " mean " << format_double(d.mean) << "  ["
                << format_double(d.min) << ", " << format_double(d.max) << "]  " << format_double(d.mean_relative_pct)
                << "%\n";
        }
    }
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
    return kExitOk;
}

int do_forecast(const ForecastArgs& a, std::ostream& out, std::ostream&) {
    const auto trace = input_stage([&] { return energy::load_trace_csv(a.trace); });
    const auto kind = forecast::parse_model_kind(a.model);
    if (!kind) throw InputError("unknown model " + a.model);
    forecast::LstmConfig cfg;
    cfg.epochs = a.epochs;
    cfg.window = a.window;
    cfg.hidden_size = a.hidden;
    cfg.seed = a.seed;
    input_stage([&] {
        cfg.validate();
        return 0;
    });

    const auto series = trace.powers();
    const auto model = forecast::make_model(*kind, series, cfg, a.beta);
    const auto predictions = forecast::evaluate(model, trace);
    out << "model " << forecast::to_string(model.kind()) << " window " << model.window() << " samples " << series.size()
        << "\n";
    if (!model.losses().empty()) {
        const auto& first = model.losses().front();
        const auto& last = model.losses().back();
        out << "loss epoch " << first.epoch << " train " << format_double(first.train) << " val "
            << format_double(first.validation) << "\n"
            << "loss epoch " << last.epoch << " train " << format_double(last.train) << " val "
            << format_double(last.validation) << "\n";
    }
    out << "rmse_mw " << format_double(forecast::rmse(predictions)) << "\n";
    if (!a.out.empty()) {
        std::ofstream f(a.out);
        if (!f) throw Error(ErrorCode::IoError, "cannot write " + a.out);
        f << "t,actual_mw,predicted_mw\n";
        for (const auto& p : predictions) {
            f << format_double(p.t_s) << "," << format_double(p.actual_mw) << "," << format_double(p.predicted_mw) << "\n";
        }
        out << "wrote " << a.out << "\n";
    }
    if (!a.loss_out.empty()) {
        std::ofstream f(a.loss_out);
        if (!f) throw Error(ErrorCode::IoError, "cannot write " + a.loss_out);
        f << "epoch,train_loss,validation_loss\n";
        for (const auto& l : model.losses()) {
            f << l.epoch << "," << format_double(l.train) << "," << format_double(l.validation) << "\n";
        }
        out << "wrote " << a.loss_out << "\n";
    }
    return kExitOk;
}

int do_codec(const std::string& hex, std::ostream& out, std::ostream&) {
    // bytes that do not decode are bad input, same as bad hex
    out << input_stage([&] { return protocol::describe_packet(protocol::parse_hex(hex)); });
    return kExitOk;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discrete-event simulator for battery-less IoT networks", "blis_sim"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Simulate one scenario and write its metrics");
    run_cmd->add_option("--config", run.config, "Scenario JSON file")->required();
    run_cmd->add_option("--seed", run.seed, "Seed (defaults to the config's)");
    run_cmd->add_option("--out", run.out, "Output directory")->required();
    run_cmd->add_option("--format", run.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    run_cmd->add_flag("--plot", run.plot, "Also write SVG plots");

    CompareArgs cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "Paired sweep over configs, strategies and seeds");
    cmp_cmd->add_option("--configs", cmp.configs, "Glob of scenario JSON files")->required();
    cmp_cmd->add_option("--seeds", cmp.seeds, "Seed list, e.g. 1,2,5-8");
    cmp_cmd->add_option("--strategies", cmp.strategies, "Comma-separated energy/aggregation pairs");
    cmp_cmd->add_option("--baseline", cmp.baseline, "Variant the deltas are taken against (default: first)");
    cmp_cmd->add_option("--out", cmp.out, "Output directory");
    cmp_cmd->add_option("--format", cmp.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    cmp_cmd->add_flag("--plot", cmp.plot, "Also write SVG plots");
    cmp_cmd->add_option("--threads", cmp.threads, "Worker threads (capped by BLIS_SIM_THREADS)");

    ForecastArgs fc;
    auto* fc_cmd = app.add_subcommand("forecast", "Fit a harvest forecaster and report its RMSE");
    fc_cmd->add_option("--trace", fc.trace, "Trace CSV (time_s,power_mw)")->required();
    fc_cmd->add_option("--model", fc.model, "lstm, ewma or persistence")
        ->check(CLI::IsMember({"lstm", "ewma", "persistence"}));
    fc_cmd->add_option("--epochs", fc.epochs, "LSTM epochs");
    fc_cmd->add_option("--window", fc.window, "Input window, at most 10");
    fc_cmd->add_option("--hidden", fc.hidden, "LSTM hidden units");
    fc_cmd->add_option("--seed", fc.seed, "LSTM initialization seed");
    fc_cmd->add_option("--beta", fc.beta, "EWMA smoothing factor");
    fc_cmd->add_option("--out", fc.out, "Write predictions CSV (t,actual_mw,predicted_mw) here");
    fc_cmd->add_option("--loss-out", fc.loss_out, "Write the per-epoch LSTM loss CSV here");

    std::string hex;
    auto* codec_cmd = app.add_subcommand("codec", "Decode a packet given as hex");
    codec_cmd->add_option("--hex", hex, "Packet bytes in hex")->required();

    if (args.empty()) {
        err << app.help();
        return kExitUsage;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        // CLI11 checks required options before extras; name the stray flag first
        std::vector<std::string> stray = app.remaining();
        for (const auto* sub : subs) {
            const auto r = sub->remaining();
            stray.insert(stray.end(), r.begin(), r.end());
        }
        if (!stray.empty() && e.get_name() != "ExtrasError") {
            err << "error: unrecognized argument";
            for (const auto& s : stray) err << " " << s;
            err << "\n";
        }
        err << "error: " << e.what() << "\n\n";
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (*run_cmd) return do_run(run, out, err);
        if (*cmp_cmd) return do_compare(cmp, out, err);
        if (*fc_cmd) return do_forecast(fc, out, err);
        if (*codec_cmd) return do_codec(hex, out, err);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return cli_dispatch(args, out, err);
}

}  // namespace blis::cli
