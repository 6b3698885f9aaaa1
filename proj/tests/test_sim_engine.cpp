#include <map>
#include <set>

#include "doctest.h"

#include "blis/metrics.hpp"
#include "blis/sim_engine.hpp"

using namespace blis;
using namespace blis::sim;

namespace {

ScenarioConfig bundled(const std::string& name, double duration_s = 0.0) {
    auto c = load_scenario(std::filesystem::path(BLIS_CONFIG_DIR) / (name + ".json"));
    if (duration_s > 0.0) c.duration_s = duration_s;
    return c;
}

}  // namespace

TEST_SUITE("sim_engine") {

TEST_CASE("event queue pops by time then insertion order") {
    EventQueue q;
    for (int k = 0; k < 5; ++k) {
        Event e;
        e.time_us = k % 2 ? 10 : 20;
        e.target = static_cast<std::size_t>(k);
        q.push(e);
    }
    std::vector<std::size_t> order;
    while (!q.empty()) order.push_back(q.pop().target);
    CHECK(order == std::vector<std::size_t>{1, 3, 0, 2, 4});
}

TEST_CASE("same config and seed give byte-identical logs") {
    const auto c = bundled("table2_nml50_lp50", 900);
    const auto a = run_scenario(c, 7);
    const auto b = run_scenario(c, 7);
    CHECK(a.log.to_string() == b.log.to_string());
    CHECK_FALSE(a.stats.aborted);
    const auto other = run_scenario(c, 8);
    CHECK(other.log.to_string() != a.log.to_string());
}

TEST_CASE("empty scenario yields an empty log and zero metrics") {
    ScenarioConfig c;
    c.apps.clear();
    c.duration_s = 100;
    const auto r = run_scenario(c, 1);
    CHECK(r.log.empty());
    const auto m = metrics::compute_metrics(r.log);
    CHECK(m.data_loss == 0.0);
    CHECK(m.mean_packet_delay_s == 0.0);
    CHECK(m.availability == 0.0);
    CHECK(m.devices.empty());
}

TEST_CASE("table 1 builds eleven devices on distinct channels") {
    Simulation sim(bundled("table2_nml50_lp50", 60), 1);
    CHECK(sim.devices().size() == 11);
    CHECK(sim.aggregator().app_count() == 3);
    std::set<std::uint8_t> channels;
    for (const auto& a : sim.config().apps) channels.insert(a.channel().index());
    CHECK(channels.size() == 3);
    CHECK(sim.device_index(2, 0) == 6);
}

TEST_CASE("lp designation sets the steady-state energy against the threshold") {
    for (const char* name : {"table2_nml0_lp100", "table2_nml50_lp50", "table2_nml100_lp0"}) {
        Simulation sim(bundled(name, 60), 3);
        int lp = 0;
        for (const auto& d : sim.devices()) {
            const double th = d.runtime.config().threshold_j();
            if (d.lp_designated) {
                ++lp;
                CHECK(d.steady_energy_j < th);
            } else {
                CHECK(d.steady_energy_j >= th);
            }
        }
        const double frac = sim.config().lp_fraction;
        CHECK(lp == static_cast<int>(std::llround(frac * 2) + std::llround(frac * 4) + std::llround(frac * 5)));
    }
}

TEST_CASE("oracle states under constant power meet every rate target") {
    const auto c = bundled("oracle_rate");
    const auto r = run_scenario(c, 1);
    const auto m = metrics::compute_metrics(r.log);
    REQUIRE(m.apps.size() == 1);
    const auto& app = m.apps[0];
    REQUIRE(app.achieved_rate.size() == 2);
    REQUIRE(app.target_rate.size() == 2);
    for (std::size_t p = 0; p < 2; ++p) {
        CHECK(app.target_rate[p] == 20);
        CHECK(app.achieved_rate[p] == app.target_rate[p]);
    }
    CHECK(m.data_loss == 0.0);
}

TEST_CASE("replay scenario loses nothing across the forced-off window") {
    const auto r = run_scenario(bundled("fig6_replay"), 1);
    const auto m = metrics::compute_metrics(r.log);
    REQUIRE(m.apps.size() == 1);
    CHECK(m.apps[0].achieved_rate == std::vector<std::uint64_t>{4});
    CHECK(m.apps[0].reattempts > 0);
    CHECK(m.lost == 0);
}

TEST_CASE("replies follow the beacons that solicited them") {
    auto c = bundled("table2_nml50_lp50", 1800);
    c.propagation_delay_us = 500;
    const auto r = run_scenario(c, 5);
    CHECK(r.stats.dependency_violations == 0);
    CHECK(r.stats.illegal_transitions == 0);
    std::map<std::pair<std::string, std::int64_t>, SimTime> first_beacon;
    SimTime last = 0;
    int replies = 0;
    for (const auto& rec : r.log.records()) {
        CHECK(rec.time_us >= last);
        last = rec.time_us;
        if (rec.entity.rfind("agg:", 0) != 0) continue;
        const DetailFields f(rec.detail);
        if (rec.event == "beacon") {
            first_beacon.try_emplace({rec.entity, f.integer("seq")}, rec.time_us);
        } else if (rec.event == "sensor_rx") {
            ++replies;
            const auto it = first_beacon.find({rec.entity, f.integer("seq")});
            REQUIRE(it != first_beacon.end());
            CHECK(rec.time_us >= it->second + 2 * c.propagation_delay_us);
            CHECK(f.number("delay_s") >= 0.0);
        }
    }
    CHECK(replies > 0);
}

TEST_CASE("energy ledger balances for every strategy") {
    for (auto s : {atem::EnergyStrategy::Atem, atem::EnergyStrategy::FederatedFixed, atem::EnergyStrategy::Central}) {
        auto c = bundled("table2_nml50_lp50", 1200);
        c.device.strategy = s;
        const auto r = run_scenario(c, 2);
        CHECK(r.stats.audit_failures == 0);
        CHECK(r.stats.worst_audit_error <= 1e-6);
        CHECK(r.stats.negative_energy_events == 0);
        CHECK(r.stats.task_energy_j > 0.0);
    }
}

TEST_CASE("a simulation runs once") {
    Simulation sim(bundled("fig6_replay", 10), 1);
    sim.run();
    CHECK_THROWS_AS(sim.run(), Error);
}

}  // TEST_SUITE
