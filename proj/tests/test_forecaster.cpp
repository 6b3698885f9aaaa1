#include <cmath>

#include "doctest.h"

#include "blis/forecaster.hpp"

using namespace blis;
using namespace blis::forecast;

namespace {

LstmConfig quick(int epochs = 60) {
    LstmConfig c;
    c.epochs = epochs;
    c.hidden_size = 16;
    c.learning_rate = 0.01;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_SUITE("forecaster") {

TEST_CASE("persistence repeats the last sample") {
    const auto m = ForecastModel::persistence(3);
    const double h[] = {1.0, 2.0, 4.2};
    CHECK(m.predict(h) == doctest::Approx(4.2));
}

TEST_CASE("ewma with beta 0.5 over [2,4] gives 3") {
    const auto m = ForecastModel::ewma(0.5, 2);
    const double h[] = {2.0, 4.0};
    CHECK(m.predict(h) == doctest::Approx(3.0));
    // s = x0, then s <- beta x + (1 - beta) s
    const auto m3 = ForecastModel::ewma(0.25, 3);
    const double h3[] = {8.0, 0.0, 4.0};
    double s = 8.0;
    for (double x : {0.0, 4.0}) s = 0.25 * x + 0.75 * s;
    CHECK(m3.predict(h3) == doctest::Approx(s));
}

TEST_CASE("predict insists on the window length") {
    const auto m = ForecastModel::ewma(0.5, 4);
    const double h[] = {1.0, 2.0};
    try {
        (void)m.predict(h);
        FAIL("expected WrongWindow");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::WrongWindow);
    }
}

TEST_CASE("predictions are clamped at zero") {
    const auto m = ForecastModel::persistence(1);
    const double h[] = {-1.0};
    CHECK(m.predict(h) == 0.0);
}

TEST_CASE("lstm fits a constant trace") {
    const auto trace = energy::constant_trace(5.0, 299.0, 1.0);
    const auto model = train_lstm(trace, quick(30));
    std::vector<double> h(10, 5.0);
    CHECK(model.predict(h) == doctest::Approx(5.0).epsilon(0.01));
    const auto lstm_rmse = rmse(evaluate(model, trace));
    CHECK(lstm_rmse < 0.01);
    const auto persistence_rmse = rmse(evaluate(ForecastModel::persistence(10), trace));
    CHECK(lstm_rmse <= persistence_rmse + 0.01);
}

TEST_CASE("lstm training is deterministic and its loss decreases") {
    const auto trace = energy::sinusoid_trace(5.0, 2.0, 50.0, 299.0, 1.0);
    const auto a = train_lstm(trace, quick());
    const auto b = train_lstm(trace, quick());
    REQUIRE(a.weights());
    REQUIRE(b.weights());
    CHECK(a.weights()->wh == b.weights()->wh);
    CHECK(a.weights()->wy == b.weights()->wy);
    const auto pa = evaluate(a, trace), pb = evaluate(b, trace);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k].predicted_mw == pb[k].predicted_mw);

    const auto& losses = a.losses();
    REQUIRE(losses.size() == 61);
    CHECK(losses.front().epoch == 0);
    for (const auto& l : losses) {
        CHECK(std::isfinite(l.train));
        CHECK(std::isfinite(l.validation));
    }
    CHECK(losses.back().train <= losses.front().train);
    CHECK(rmse(pa) < 0.5);

    auto other = quick();
    other.seed = 6;
    CHECK(train_lstm(trace, other).weights()->wh != a.weights()->wh);
}

TEST_CASE("lstm refuses short traces and bad configs") {
    const auto trace = energy::constant_trace(1.0, 50.0, 1.0);
    try {
        train_lstm(trace, quick());
        FAIL("expected InsufficientData");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientData);
    }
    auto bad = quick();
    bad.window = 11;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad.window = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("state estimate from predicted power") {
    EstimatorParams p;
    p.buffer.capacitance_f = 267e-6;
    p.buffer.leakage_fraction = 0.0;
    p.buffer.efficiency = 1.0;
    p.threshold_j = 359.776e-6;
    p.slot_s = 0.01;
    p.horizon_s = 10.0;
    CHECK(estimate_state(0.0, p, 1e-6) == DeviceState::LowPower);
    CHECK(estimate_state(1.0, p, 1e-6) == DeviceState::Normal);  // +10 mJ over the horizon
    CHECK(estimate_state(0.0, p, p.threshold_j) == DeviceState::LowPower);
    CHECK(estimate_state(0.0, p, p.threshold_j * 1.001) == DeviceState::Normal);
}

TEST_CASE("alpha is the rolling fraction of correct estimates") {
    using S = DeviceState;
    std::vector<std::pair<S, S>> all(10, {S::Normal, S::Normal});
    CHECK(update_alpha(all) == 1.0);
    std::vector<std::pair<S, S>> half;
    for (int k = 0; k < 10; ++k) half.push_back({S::Normal, k % 2 ? S::Normal : S::LowPower});
    CHECK(update_alpha(half) == doctest::Approx(0.5));
    // only the last `horizon` entries count
    std::vector<std::pair<S, S>> tail(50, {S::Normal, S::LowPower});
    tail.insert(tail.end(), 4, {S::LowPower, S::LowPower});
    CHECK(update_alpha(tail, 4) == 1.0);

    AlphaTracker t(4, 0.9);
    CHECK(t.alpha() == 0.9);
    t.record(S::Normal, S::LowPower);
    CHECK(t.alpha() == 0.0);
    for (int k = 0; k < 4; ++k) t.record(S::Normal, S::Normal);
    CHECK(t.alpha() == 1.0);
    CHECK(t.samples() == 4);
}

TEST_CASE("model factory builds each kind") {
    std::vector<double> series(200, 2.0);
    for (auto kind : {ModelKind::Persistence, ModelKind::Ewma, ModelKind::Lstm}) {
        const auto m = make_model(kind, series, quick(5), 0.5);
        CHECK(m.kind() == kind);
        CHECK(m.window() >= 1);
        CHECK(m.window() <= kMaxWindow);
    }
    CHECK(parse_model_kind("lstm") == ModelKind::Lstm);
    CHECK_FALSE(parse_model_kind("arima"));
}

}  // TEST_SUITE
