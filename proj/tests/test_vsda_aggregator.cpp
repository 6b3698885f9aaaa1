#include "doctest.h"

#include "blis/rng.hpp"
#include "blis/vsda_aggregator.hpp"

using namespace blis;
using namespace blis::vsda;
using protocol::SyncVector;

namespace {

struct FixedEstimator : StateEstimator {
    std::vector<DeviceState> states;
    DeviceState estimate(std::size_t, int module, SimTime, SimTime, const ModuleReport&) override {
        return states.at(static_cast<std::size_t>(module));
    }
};

AppSpec replay_app() {
    AppSpec a;
    a.app_id = 1;
    a.module_count = 2;
    a.rate_nml = 3;
    a.rate_lp = 1;
    return a;
}

protocol::SensorDataPacket reply(const protocol::Beacon& b, int module, DeviceState s = DeviceState::Normal) {
    return protocol::make_sensor_packet(b.app_id, static_cast<std::uint8_t>(module), b.seq, {s, 400000}, {{0, 1, 0}});
}

int solicited_module(const protocol::Beacon& b) {
    for (std::size_t j = 0; j < b.app_synch.sync_new.size(); ++j) {
        if (b.app_synch.sync_new[j] > b.app_synch.sync_current[j]) return static_cast<int>(j);
    }
    return -1;
}

}  // namespace

TEST_SUITE("vsda_aggregator") {

TEST_CASE("beacon period from accuracy, period and total rate") {
    const auto p = compute_beacon_period(0.98, 3600 * kMicrosPerSecond, 10);
    CHECK(p.tau_us <= 352'800'000);
    CHECK(p.tau_us >= 352'800'000 - 1);
    CHECK_FALSE(p.infeasible);
    CHECK(compute_beacon_period(1.0, 3600 * kMicrosPerSecond, 20).tau_us == 180'000'000);
    CHECK(compute_beacon_period(0.5, 3600 * kMicrosPerSecond, 20).tau_us == 90'000'000);
    CHECK_THROWS_AS(compute_beacon_period(0.0, 3600 * kMicrosPerSecond, 20), Error);
    CHECK_THROWS_AS(compute_beacon_period(1.5, 3600 * kMicrosPerSecond, 20), Error);
}

TEST_CASE("beacon period is floored at one receive-sense-send cycle") {
    CHECK(kMinBeaconPeriodUs == 123'071);
    const auto p = compute_beacon_period(0.01, 3600 * kMicrosPerSecond, 60000);
    CHECK(p.tau_us == kMinBeaconPeriodUs);
    CHECK(p.infeasible);
}

TEST_CASE("beacon period sums rates over every module and sensor") {
    AppSpec a;
    a.module_count = 3;
    a.sensors_per_module = {2, 1, 1};
    a.rate_nml = 10;
    a.rate_lp = 5;
    const std::vector<DeviceState> s = {DeviceState::Normal, DeviceState::LowPower, DeviceState::Normal};
    CHECK(total_rate(a, s) == 2 * 10 + 5 + 10);
    CHECK(module_targets(a, s) == std::vector<std::uint16_t>{10, 5, 10});
    CHECK(compute_beacon_period(1.0, 3600 * kMicrosPerSecond, a, s).tau_us == 3600'000'000 / 35);
}

TEST_CASE("random tuples satisfy the beacon period bound") {
    Rng rng(17);
    for (int k = 0; k < 5000; ++k) {
        const double alpha = rng.uniform(0.01, 1.0);
        const SimTime period = rng.uniform_int(1, 10'000) * kMicrosPerSecond;
        const auto total = static_cast<std::uint32_t>(rng.uniform_int(1, 5000));
        const auto p = compute_beacon_period(alpha, period, total);
        if (p.infeasible) {
            CHECK(p.tau_us == kMinBeaconPeriodUs);
            CHECK(alpha * period / total < kMinBeaconPeriodUs);
        } else {
            CHECK(static_cast<double>(p.tau_us) * total <= alpha * static_cast<double>(period));
            CHECK(static_cast<double>(p.tau_us + 1) * total > alpha * static_cast<double>(period));
        }
    }
}

TEST_CASE("sync vector picks the first unmet module") {
    const std::vector<std::uint16_t> targets = {3, 1};
    auto c = set_sync_vector({0, 0}, targets);
    CHECK(c.next == SyncVector{1, 0});
    CHECK(c.module == 0);
    c = set_sync_vector({3, 0}, targets);
    CHECK(c.next == SyncVector{3, 1});
    CHECK(c.module == 1);
    c = set_sync_vector({3, 1}, targets);
    CHECK(c.next == SyncVector{3, 1});
    CHECK_FALSE(c.module);
}

TEST_CASE("sync vector scan start and eligibility") {
    const std::vector<std::uint16_t> targets = {3, 1, 2};
    CHECK(set_sync_vector({0, 0, 0}, targets, 1).module == 1);
    const bool nml[] = {false, false, true};
    CHECK(set_sync_vector({0, 0, 0}, targets, 0, nml).module == 2);
    CHECK(set_sync_vector({0, 0, 2}, targets, 0, nml).module == 0);
}

TEST_CASE("sync vector solicits at most one reading and never exceeds targets") {
    Rng rng(23);
    for (int k = 0; k < 2000; ++k) {
        const auto m = static_cast<std::size_t>(rng.uniform_int(1, 8));
        std::vector<std::uint16_t> targets(m);
        SyncVector v(m);
        for (std::size_t j = 0; j < m; ++j) {
            targets[j] = static_cast<std::uint16_t>(rng.uniform_int(0, 20));
            v[j] = static_cast<std::uint16_t>(rng.uniform_int(0, targets[j]));
        }
        const auto c = set_sync_vector(v, targets, static_cast<std::size_t>(rng.uniform_int(0, 7)));
        int diff = 0;
        for (std::size_t j = 0; j < m; ++j) {
            CHECK(c.next[j] >= v[j]);
            CHECK(c.next[j] <= targets[j]);
            diff += c.next[j] - v[j];
        }
        CHECK(diff <= 1);
        CHECK((diff == 1) == c.module.has_value());
    }
}

TEST_CASE("replay: first beacons advance the vector") {
    FixedEstimator est;
    est.states = {DeviceState::Normal, DeviceState::LowPower};
    Aggregator agg({replay_app()}, AggregatorConfig{}, &est);
    const auto b0 = agg.emit_beacon(0, 0);
    REQUIRE(b0);
    CHECK(b0->seq == 0);
    CHECK(b0->app_synch.sync_current == SyncVector{0, 0});
    CHECK(b0->app_synch.sync_new == SyncVector{1, 0});
    CHECK(b0->rate_control.rate_new == std::vector<std::uint16_t>{3, 1});
    const auto r = agg.on_sensor_data(reply(*b0, 0), 200'000);
    CHECK(r.outcome == ReplyOutcome::Accepted);
    CHECK(r.delay_s == doctest::Approx(0.2));
    CHECK(agg.app(0).current == SyncVector{1, 0});
    const auto b1 = agg.emit_beacon(0, agg.beacon_interval(0));
    REQUIRE(b1);
    CHECK(b1->seq == 1);
    CHECK(b1->app_synch.sync_current == SyncVector{1, 0});
    CHECK(b1->app_synch.sync_new == SyncVector{2, 0});
}

TEST_CASE("duplicate and post-rollover replies are stale") {
    Aggregator agg({replay_app()}, AggregatorConfig{});
    const auto b0 = agg.emit_beacon(0, 0);
    REQUIRE(b0);
    CHECK(agg.on_sensor_data(reply(*b0, 0), 10).outcome == ReplyOutcome::Accepted);
    CHECK(agg.on_sensor_data(reply(*b0, 0), 20).outcome == ReplyOutcome::Stale);
    CHECK(agg.app(0).current == SyncVector{1, 0});
    CHECK(agg.app(0).counters.stale == 1);

    const auto b1 = agg.emit_beacon(0, 100);
    REQUIRE(b1);
    agg.on_period_rollover(0, 200);
    CHECK(agg.app(0).current == SyncVector{0, 0});
    CHECK(agg.app(0).counters.lost == 0);
    CHECK(agg.app(0).counters.abandoned == 1);
    CHECK(agg.on_sensor_data(reply(*b1, solicited_module(*b1)), 300).outcome == ReplyOutcome::Stale);
}

TEST_CASE("unanswered solicitation is resent with the same seq up to the limit") {
    AggregatorConfig cfg;
    cfg.reattempt_limit = 3;
    Aggregator agg({replay_app()}, cfg);
    const auto first = agg.emit_beacon(0, 0);
    REQUIRE(first);
    for (int k = 1; k <= 3; ++k) {
        const auto again = agg.emit_beacon(0, k * 1000);
        REQUIRE(again);
        CHECK(again->seq == first->seq);
        CHECK(again->app_synch.sync_new == first->app_synch.sync_new);
    }
    CHECK(agg.app(0).counters.reattempts == 3);
    CHECK(agg.app(0).counters.lost == 0);
    const auto next = agg.emit_beacon(0, 4000);
    REQUIRE(next);
    CHECK(agg.app(0).counters.lost == 1);
    CHECK(next->seq != first->seq);
    CHECK(solicited_module(*next) == 1);  // scan moved past the lost module
}

TEST_CASE("late reply within the reattempt window is not lost") {
    Aggregator agg({replay_app()}, AggregatorConfig{});
    const auto first = agg.emit_beacon(0, 0);
    agg.emit_beacon(0, 1000);
    const auto resent = agg.emit_beacon(0, 2000);
    REQUIRE(resent);
    const auto r = agg.on_sensor_data(reply(*resent, 0), 2500);
    CHECK(r.outcome == ReplyOutcome::Accepted);
    CHECK(r.delay_s == doctest::Approx(2500e-6));
    CHECK(agg.app(0).counters.lost == 0);
    CHECK(first->seq == resent->seq);
}

TEST_CASE("reattempt limit zero loses on the next beacon") {
    AggregatorConfig cfg;
    cfg.reattempt_limit = 0;
    Aggregator agg({replay_app()}, cfg);
    agg.emit_beacon(0, 0);
    agg.emit_beacon(0, 1000);
    CHECK(agg.app(0).counters.lost == 1);
    CHECK(agg.app(0).counters.reattempts == 0);
}

TEST_CASE("keep-alive once every target is met") {
    AggregatorConfig cfg;
    cfg.skip_lp = false;
    AppSpec small = replay_app();
    small.rate_nml = 1;
    Aggregator agg({small}, cfg);
    for (int k = 0; k < 2; ++k) {
        const auto b = agg.emit_beacon(0, k * 1000);
        REQUIRE(b);
        agg.on_sensor_data(reply(*b, solicited_module(*b)), k * 1000 + 10);
    }
    const auto ka = agg.emit_beacon(0, 5000);
    REQUIRE(ka);
    CHECK(ka->app_synch.sync_new == ka->app_synch.sync_current);
    CHECK(ka->app_synch.sync_new == SyncVector{1, 1});
    cfg.keep_alive = false;
    Aggregator quiet({small}, cfg);
    for (int k = 0; k < 2; ++k) {
        const auto b = quiet.emit_beacon(0, k * 1000);
        quiet.on_sensor_data(reply(*b, solicited_module(*b)), k * 1000 + 10);
    }
    CHECK_FALSE(quiet.emit_beacon(0, 5000));
}

TEST_CASE("vector never decreases within a period nor exceeds its targets") {
    Rng rng(41);
    FixedEstimator est;
    est.states = {DeviceState::Normal, DeviceState::LowPower};
    Aggregator agg({replay_app()}, AggregatorConfig{}, &est);
    SyncVector prev{0, 0};
    for (int k = 0; k < 200; ++k) {
        const auto b = agg.emit_beacon(0, k * 1000);
        REQUIRE(b);
        if (rng.bernoulli(0.6) && solicited_module(*b) >= 0) agg.on_sensor_data(reply(*b, solicited_module(*b)), k * 1000 + 5);
        const auto& a = agg.app(0);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(a.current[j] >= prev[j]);
            CHECK(a.current[j] <= a.targets[j]);
        }
        prev = a.current;
    }
    CHECK(agg.app(0).current == SyncVector{3, 1});
}

TEST_CASE("accuracy drives the beacon period") {
    FixedEstimator est;
    est.states = {DeviceState::Normal, DeviceState::Normal};
    Aggregator agg({replay_app()}, AggregatorConfig{}, &est);
    const auto b = agg.emit_beacon(0, 0);
    CHECK(agg.beacon_interval(0) == 600'000'000);  // 3600 s / 6
    agg.on_sensor_data(reply(*b, 0, DeviceState::LowPower), 10);  // wrong prediction
    agg.emit_beacon(0, 20);
    CHECK(agg.app(0).alpha_used == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(agg.beacon_interval(0) == 6'000'000);  // alpha floored at 0.01
    agg.set_alpha(0, 0.5);
    agg.emit_beacon(0, 30);
    CHECK(agg.beacon_interval(0) == 300'000'000);
}

TEST_CASE("polling alternates strictly between modules") {
    AggregatorConfig cfg;
    cfg.scheme = Scheme::Polling;
    Aggregator agg({replay_app()}, cfg);
    CHECK(agg.beacon_interval(0) == 600'000'000);  // T / (2 * 3)
    std::vector<int> order;
    for (int k = 0; k < 6; ++k) {
        const auto b = agg.emit_beacon(0, k * 1000);
        REQUIRE(b);
        order.push_back(solicited_module(*b));
        agg.on_sensor_data(reply(*b, order.back()), k * 1000 + 5);
    }
    CHECK(order == std::vector<int>{0, 1, 0, 1, 0, 1});
    CHECK(agg.app(0).current == SyncVector{3, 3});
}

TEST_CASE("actuator control rides on the next beacon") {
    Aggregator agg({replay_app()}, AggregatorConfig{});
    agg.queue_actuator(0, {true, 1});
    const auto b = agg.emit_beacon(0, 0);
    REQUIRE(b);
    REQUIRE(b->actuator_control);
    CHECK(b->actuator_control->target_module == 1);
    CHECK_FALSE(agg.emit_beacon(0, 1)->actuator_control);
    CHECK_THROWS_AS(agg.queue_actuator(0, {true, 2}), Error);
}

}  // TEST_SUITE
