#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "blis/cli.hpp"
#include "blis/metrics.hpp"
#include "blis/sim_engine.hpp"

using namespace blis;
using namespace blis::metrics;
namespace fs = std::filesystem;

namespace {

const char* kStart = "0,sim,start,name=t seed=4 duration_us=10000000 slot_us=10000 period_us=5000000 apps=1 devices=1 "
                     "strategy=atem scheme=vsda\n";

EventLog synthetic(int answered, int lost) {
    std::ostringstream s;
    s << "time_us,entity,event,detail\n" << kStart;
    s << "0,dev:1.0,avail,comp=sense up=0\n0,dev:1.0,avail,comp=radio up=0\n";
    s << "2000000,dev:1.0,avail,comp=sense up=1\n";
    s << "4000000,dev:1.0,avail,comp=radio up=1\n";
    s << "6000000,dev:1.0,avail,comp=radio up=0\n";
    for (int k = 0; k < answered; ++k) {
        s << 100 + k << ",agg:1,sensor_rx,module=0 seq=" << k << " delay_s=" << (k + 1) << " period=0\n";
    }
    for (int k = 0; k < lost; ++k) s << 200 + k << ",agg:1,lost,module=0 seq=" << 100 + k << "\n";
    s << "5000000,agg:1,period,index=0 targets=3/1\n";
    s << "10000000,agg:1,period,index=1 targets=3/1\n";
    s << "10000000,sim,end,events=1\n";
    return EventLog::parse(s.str());
}

struct Cli {
    int code = -1;
    std::string out, err;
};

Cli invoke(std::vector<std::string> args) {
    std::ostringstream o, e;
    Cli r;
    r.code = cli::cli_dispatch(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("blis_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string config_path(const std::string& name) { return (fs::path(BLIS_CONFIG_DIR) / (name + ".json")).string(); }

}  // namespace

TEST_SUITE("metrics_cli") {

TEST_CASE("data loss is lost over settled solicitations") {
    const auto m = compute_metrics(synthetic(7, 3));
    CHECK(m.answered == 7);
    CHECK(m.lost == 3);
    CHECK(m.data_loss == doctest::Approx(0.3));
    CHECK(m.mean_packet_delay_s == doctest::Approx(4.0));
    CHECK(compute_metrics(synthetic(5, 0)).data_loss == 0.0);
    CHECK(compute_metrics(synthetic(0, 0)).data_loss == 0.0);
}

TEST_CASE("availability and first-available time from the avail records") {
    const auto m = compute_metrics(synthetic(1, 0));
    REQUIRE(m.devices.size() == 1);
    CHECK(m.devices[0].sense.availability == doctest::Approx(0.8));
    CHECK(m.devices[0].radio.availability == doctest::Approx(0.2));
    CHECK(*m.devices[0].sense.initial_time_s == doctest::Approx(2.0));
    CHECK(*m.devices[0].radio.initial_time_s == doctest::Approx(4.0));
    CHECK(m.availability == doctest::Approx(0.5));
    CHECK(m.available_initial_time_s == doctest::Approx(3.0));
    REQUIRE(m.apps.size() == 1);
    CHECK(m.apps[0].achieved_rate == std::vector<std::uint64_t>{1, 0});
    CHECK(m.apps[0].target_rate == std::vector<std::uint64_t>{4, 4});
}

TEST_CASE("a component never available is flagged, not zero") {
    std::ostringstream s;
    s << "time_us,entity,event,detail\n" << kStart << "0,dev:1.0,avail,comp=sense up=0\n"
      << "0,dev:1.0,avail,comp=radio up=0\n10000000,sim,end,events=0\n";
    const auto m = compute_metrics(EventLog::parse(s.str()));
    REQUIRE(m.devices.size() == 1);
    CHECK_FALSE(m.devices[0].sense.initial_time_s);
    CHECK(m.never_available == 2);
    CHECK(m.available_initial_time_s == doctest::Approx(10.0));
    CHECK(to_json(m)["devices"][0]["sense"]["initial_time_s"].is_null());
}

TEST_CASE("malformed records are named by number") {
    std::ostringstream s;
    s << "time_us,entity,event,detail\n" << kStart << "5,agg:1,sensor_rx,module=0 seq=1\n";
    try {
        compute_metrics(EventLog::parse(s.str()));
        FAIL("expected MalformedLog");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedLog);
        CHECK(std::string(e.what()).find("record 2") != std::string::npos);
    }
    try {
        compute_metrics(EventLog::parse("time_us,entity,event,detail\n0,agg:1,beacon,seq=0\n"));
        FAIL("expected MalformedLog");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedLog);
    }
    CHECK_THROWS_AS(EventLog::parse("time,entity\n"), Error);
}

TEST_CASE("log text round-trips") {
    const auto log = synthetic(2, 1);
    CHECK(EventLog::parse(log.to_string()).records() == log.records());
}

TEST_CASE("metrics and reports round-trip through json") {
    const auto m = compute_metrics(synthetic(4, 1));
    CHECK(metrics_from_json(to_json(m)) == m);
    ComparisonReport r;
    r.rows.push_back({"t", "atem/vsda", 4, m});
    r.rows.push_back({"t", "central/vsda", 4, m});
    r.deltas = paired_deltas(r.rows, "central/vsda");
    const auto j = to_json(r);
    CHECK(j.at("schema_version") == kSchemaVersion);
    CHECK(report_from_json(j) == r);
}

TEST_CASE("identical strategies have zero deltas") {
    const auto m = compute_metrics(synthetic(4, 1));
    std::vector<RunRow> rows;
    for (std::uint64_t seed : {1, 2, 3}) {
        rows.push_back({"t", "a", seed, m});
        rows.push_back({"t", "b", seed, m});
    }
    const auto deltas = paired_deltas(rows, "a");
    REQUIRE_FALSE(deltas.empty());
    for (const auto& v : deltas) {
        CHECK(v.deltas.size() == delta_metrics().size());
        for (const auto& d : v.deltas) {
            CHECK(d.mean == 0.0);
            CHECK(d.min == 0.0);
            CHECK(d.max == 0.0);
            CHECK(d.pairs == 3);
        }
    }
}

TEST_CASE("empty report writes header-only csv") {
    const auto dir = scratch("empty");
    const auto files = emit_outputs(ComparisonReport{}, Format::Csv, dir);
    CHECK_FALSE(files.empty());
    std::ifstream runs(dir / "runs.csv");
    std::string header, extra;
    std::getline(runs, header);
    CHECK(header == runs_csv_header());
    CHECK(header.rfind("schema_version,", 0) == 0);
    CHECK_FALSE(std::getline(runs, extra));
}

TEST_CASE("variants and seed lists parse") {
    const auto v = parse_variant("fh/polling");
    CHECK(v.strategy == atem::EnergyStrategy::FederatedFixed);
    CHECK(v.scheme == vsda::Scheme::Polling);
    CHECK(parse_variant("central").scheme == vsda::Scheme::Vsda);
    CHECK_THROWS_AS(parse_variant("solar/vsda"), Error);
    CHECK(cli::parse_seed_list("1,2,5-8") == std::vector<std::uint64_t>{1, 2, 5, 6, 7, 8});
    CHECK_THROWS_AS(cli::parse_seed_list("3-1"), Error);
    CHECK_THROWS_AS(cli::parse_seed_list("x"), Error);
}

TEST_CASE("thread budget honours the environment") {
    setenv("BLIS_SIM_THREADS", "3", 1);
    CHECK(thread_budget() == 3);
    unsetenv("BLIS_SIM_THREADS");
    CHECK(thread_budget() >= 1);
}

TEST_CASE("cli: no arguments prints usage and exits 1") {
    const auto r = invoke({});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("run") != std::string::npos);
    CHECK(r.err.find("codec") != std::string::npos);
}

TEST_CASE("cli: unknown flag exits 1 and names it") {
    const auto r = invoke({"run", "--bogus-flag", "1"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("--bogus-flag") != std::string::npos);
}

TEST_CASE("cli: codec decodes hex and rejects garbage") {
    protocol::Beacon b;
    b.app_synch = {{0, 0}, {1, 0}};
    const auto ok = invoke({"codec", "--hex", protocol::to_hex(protocol::encode_beacon(b))});
    CHECK(ok.code == cli::kExitOk);
    CHECK(ok.out.find("sync_new") != std::string::npos);
    CHECK(invoke({"codec", "--hex", "zz"}).code == cli::kExitUsage);
    CHECK(invoke({"codec", "--hex", "4243"}).code == cli::kExitUsage);
}

TEST_CASE("cli: bad config exits 1") {
    const auto dir = scratch("badcfg");
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "bad.json");
        f << R"({"duration_s": -5})";
    }
    const auto r = invoke({"run", "--config", (dir / "bad.json").string(), "--out", (dir / "out").string()});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("duration_s") != std::string::npos);
    CHECK(invoke({"run", "--config", (dir / "missing.json").string(), "--out", "x"}).code == cli::kExitUsage);
}

TEST_CASE("cli: run writes metrics files") {
    const auto dir = scratch("run");
    const auto r = invoke({"run", "--config", config_path("fig6_replay"), "--seed", "2", "--out", dir.string(), "--format",
                        "json", "--plot"});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "events.csv"));
    std::ifstream f(dir / "report.json");
    const auto j = nlohmann::json::parse(f);
    CHECK(j.at("schema_version") == kSchemaVersion);
    CHECK(j.at("rows").size() == 1);
}

TEST_CASE("cli: compare sweeps strategies") {
    const auto dir = scratch("compare");
    const auto r = invoke({"compare", "--configs", config_path("fig6_*"), "--seeds", "1-2", "--strategies",
                        "central/vsda,atem/vsda", "--out", dir.string(), "--threads", "2"});
    CHECK(r.code == cli::kExitOk);
    std::ifstream runs(dir / "runs.csv");
    int lines = 0;
    for (std::string line; std::getline(runs, line);) ++lines;
    CHECK(lines == 1 + 2 * 2);
    CHECK(fs::exists(dir / "deltas.csv"));
    CHECK(invoke({"compare", "--configs", config_path("nothing_*"), "--out", dir.string()}).code == cli::kExitUsage);
}

TEST_CASE("cli: forecast reports rmse") {
    const auto dir = scratch("forecast");
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "trace.csv");
        energy::write_trace_csv(f, energy::sinusoid_trace(3.0, 1.0, 40.0, 200.0, 1.0));
    }
    const auto r = invoke({"forecast", "--trace", (dir / "trace.csv").string(), "--model", "ewma", "--out",
                        (dir / "pred.csv").string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("rmse") != std::string::npos);
    std::ifstream pred(dir / "pred.csv");
    std::string header;
    std::getline(pred, header);
    CHECK(header == "t,actual_mw,predicted_mw");
}

}  // TEST_SUITE
