#include "blis/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blis/rng.hpp"

namespace blis::forecast {

const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Lstm: return "lstm";
        case ModelKind::Persistence: return "persistence";
        case ModelKind::Ewma: return "ewma";
    }
    return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view s) {
    if (s == "lstm") return ModelKind::Lstm;
    if (s == "persistence") return ModelKind::Persistence;
    if (s == "ewma") return ModelKind::Ewma;
    return std::nullopt;
}

void LstmConfig::validate() const {
    if (window < 1 || window > kMaxWindow) throw Error(ErrorCode::InvalidArgument, "window must be in [1,10]");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    }
    if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
    if (hidden_size < 1) throw Error(ErrorCode::InvalidArgument, "hidden_size must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "train_fraction must be in (0,1]");
    }
}

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
    return (1.0 + (-z.array()).exp()).inverse().matrix();
}

struct Cache {
    std::vector<Eigen::MatrixXd> i, f, g, o, c, h;  // h[0], c[0] are the zero state
    Eigen::MatrixXd y;
};

Cache forward_cached(const LstmWeights& w, const Eigen::MatrixXd& x) {
    const Eigen::Index hidden = w.wh.cols();
    const Eigen::Index batch = x.cols();
    const auto steps = static_cast<std::size_t>(x.rows());
    Cache cache;
    cache.h.assign(1, Eigen::MatrixXd::Zero(hidden, batch));
    cache.c.assign(1, Eigen::MatrixXd::Zero(hidden, batch));
    for (std::size_t t = 0; t < steps; ++t) {
        Eigen::MatrixXd z = w.wx * x.row(static_cast<Eigen::Index>(t)) + w.wh * cache.h.back();
        z.colwise() += w.b.col(0);
        cache.i.push_back(sigmoid(z.topRows(hidden)));
        cache.f.push_back(sigmoid(z.middleRows(hidden, hidden)));
        cache.g.push_back(z.middleRows(2 * hidden, hidden).array().tanh().matrix());
        cache.o.push_back(sigmoid(z.bottomRows(hidden)));
        cache.c.push_back(cache.f.back().cwiseProduct(cache.c.back()) + cache.i.back().cwiseProduct(cache.g.back()));
        cache.h.push_back(cache.o.back().cwiseProduct(cache.c.back().array().tanh().matrix()));
    }
    cache.y = w.wy * cache.h.back();
    cache.y.array() += w.by(0, 0);
    return cache;
}

struct Grads {
    Eigen::MatrixXd wx, wh, b, wy, by;
};

double loss_and_grads(const LstmWeights& w, const Eigen::MatrixXd& x, const Eigen::MatrixXd& target, Grads& g) {
    const Eigen::Index hidden = w.wh.cols();
    const auto batch = static_cast<double>(x.cols());
    const Cache cache = forward_cached(w, x);
    const Eigen::MatrixXd err = cache.y - target;
    const double loss = err.squaredNorm() / batch;

    const Eigen::MatrixXd dy = 2.0 * err / batch;
    g.wy = dy * cache.h.back().transpose();
    g.by = Eigen::MatrixXd::Constant(1, 1, dy.sum());
    g.wx = Eigen::MatrixXd::Zero(w.wx.rows(), w.wx.cols());
    g.wh = Eigen::MatrixXd::Zero(w.wh.rows(), w.wh.cols());
    g.b = Eigen::MatrixXd::Zero(w.b.rows(), 1);

    Eigen::MatrixXd dh = w.wy.transpose() * dy;
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(hidden, x.cols());
    Eigen::MatrixXd dz(4 * hidden, x.cols());
    for (auto t = static_cast<std::ptrdiff_t>(x.rows()) - 1; t >= 0; --t) {
        const auto s = static_cast<std::size_t>(t);
        const auto& i = cache.i[s];
        const auto& f = cache.f[s];
        const auto& gg = cache.g[s];
        const auto& o = cache.o[s];
        const Eigen::ArrayXXd tc = cache.c[s + 1].array().tanh();
        dc.array() += dh.array() * o.array() * (1.0 - tc.square());
        dz.topRows(hidden) = (dc.array() * gg.array() * i.array() * (1.0 - i.array())).matrix();
        dz.middleRows(hidden, hidden) = (dc.array() * cache.c[s].array() * f.array() * (1.0 - f.array())).matrix();
        dz.middleRows(2 * hidden, hidden) = (dc.array() * i.array() * (1.0 - gg.array().square())).matrix();
        dz.bottomRows(hidden) = (dh.array() * tc * o.array() * (1.0 - o.array())).matrix();
        g.wx += dz * x.row(t).transpose();
        g.wh += dz * cache.h[s].transpose();
        g.b += dz.rowwise().sum();
        dh = w.wh.transpose() * dz;
        dc = (dc.array() * f.array()).matrix();
    }
    return loss;
}

double mse(const LstmWeights& w, const Eigen::MatrixXd& x, const Eigen::MatrixXd& target) {
    if (x.cols() == 0) return 0.0;
    return (w.forward(x) - target).squaredNorm() / static_cast<double>(x.cols());
}

struct Adam {
    double lr = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int step = 0;
    std::vector<Eigen::MatrixXd> m, v;

    void update(std::vector<Eigen::MatrixXd*> params, const std::vector<const Eigen::MatrixXd*>& grads) {
        if (m.empty()) {
            for (auto* p : params) {
                m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
                v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
            }
        }
        ++step;
        const double c1 = 1.0 - std::pow(beta1, step);
        const double c2 = 1.0 - std::pow(beta2, step);
        for (std::size_t k = 0; k < params.size(); ++k) {
            const auto& g = *grads[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * g;
            v[k] = beta2 * v[k] + (1.0 - beta2) * g.cwiseProduct(g);
            const Eigen::ArrayXXd mhat = m[k].array() / c1;
            const Eigen::ArrayXXd vhat = v[k].array() / c2;
            params[k]->array() -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
};

Eigen::MatrixXd xavier(Rng& rng, Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-a, a);
    }
    return m;
}

}  // namespace

Eigen::MatrixXd LstmWeights::forward(const Eigen::MatrixXd& x) const { return forward_cached(*this, x).y; }

ForecastModel ForecastModel::persistence(int window) {
    if (window < 1 || window > kMaxWindow) throw Error(ErrorCode::InvalidArgument, "window must be in [1,10]");
    ForecastModel m;
    m.kind_ = ModelKind::Persistence;
    m.window_ = window;
    return m;
}

ForecastModel ForecastModel::ewma(double beta, int window) {
    if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "EWMA beta must be in (0,1]");
    if (window < 1 || window > kMaxWindow) throw Error(ErrorCode::InvalidArgument, "window must be in [1,10]");
    ForecastModel m;
    m.kind_ = ModelKind::Ewma;
    m.window_ = window;
    m.beta_ = beta;
    return m;
}

ForecastModel ForecastModel::lstm(LstmWeights weights, int window, std::vector<EpochLoss> losses) {
    ForecastModel m;
    m.kind_ = ModelKind::Lstm;
    m.window_ = window;
    m.weights_ = std::move(weights);
    m.losses_ = std::move(losses);
    return m;
}

double ForecastModel::predict(std::span<const double> history) const {
    if (static_cast<int>(history.size()) != window_) {
        throw Error(ErrorCode::WrongWindow, "history has " + std::to_string(history.size()) + " samples, model window is " +
                                                std::to_string(window_));
    }
    for (double v : history) require_finite(v, "history sample");
    double out = 0.0;
    switch (kind_) {
        case ModelKind::Persistence:
            out = history.back();
            break;
        case ModelKind::Ewma: {
            double s = history.front();
            for (std::size_t k = 1; k < history.size(); ++k) s = beta_ * history[k] + (1.0 - beta_) * s;
            out = s;
            break;
        }
        case ModelKind::Lstm: {
            const auto& w = *weights_;
            Eigen::MatrixXd x(window_, 1);
            for (int k = 0; k < window_; ++k) x(k, 0) = (history[static_cast<std::size_t>(k)] - w.lo) / w.scale;
            out = w.forward(x)(0, 0) * w.scale + w.lo;
            break;
        }
    }
    return std::max(0.0, out);
}

ForecastModel train_lstm(std::span<const double> series, const LstmConfig& config) {
    config.validate();
    const auto n = series.size();
    const auto window = static_cast<std::size_t>(config.window);
    if (n < 10 * window || n <= window) {
        throw Error(ErrorCode::InsufficientData, "need at least " + std::to_string(10 * window) + " samples, got " +
                                                     std::to_string(n));
    }
    for (double v : series) require_finite(v, "trace sample");

    const auto train_end = std::max(window + 1, static_cast<std::size_t>(std::floor(config.train_fraction * n)));
    const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(train_end));
    LstmWeights w;
    w.lo = *lo_it;
    w.scale = (*hi_it - *lo_it) > 1e-12 ? (*hi_it - *lo_it) : 1.0;

    const auto build = [&](std::size_t first_target, std::size_t end_target) {
        const auto count = static_cast<Eigen::Index>(end_target > first_target ? end_target - first_target : 0);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(window), count);
        Eigen::MatrixXd y(1, count);
        for (Eigen::Index c = 0; c < count; ++c) {
            const auto t = first_target + static_cast<std::size_t>(c);
            for (std::size_t k = 0; k < window; ++k) {
                x(static_cast<Eigen::Index>(k), c) = (series[t - window + k] - w.lo) / w.scale;
            }
            y(0, c) = (series[t] - w.lo) / w.scale;
        }
        return std::pair{x, y};
    };
    const auto [x_train, y_train] = build(window, train_end);
    const auto [x_val, y_val] = build(std::max(window, train_end), n);

    Rng rng(config.seed);
    const Eigen::Index h = config.hidden_size;
    w.wx = xavier(rng, 4 * h, 1, 1.0, static_cast<double>(h));
    w.wh = xavier(rng, 4 * h, h, static_cast<double>(h), static_cast<double>(h));
    w.b = Eigen::MatrixXd::Zero(4 * h, 1);
    w.b.middleRows(h, h).setOnes();  // forget-gate bias
    w.wy = xavier(rng, 1, h, static_cast<double>(h), 1.0);
    w.by = Eigen::MatrixXd::Zero(1, 1);

    std::vector<EpochLoss> losses;
    const auto record = [&](int epoch) {
        EpochLoss e{epoch, mse(w, x_train, y_train), 0.0};
        e.validation = x_val.cols() > 0 ? mse(w, x_val, y_val) : e.train;
        if (!std::isfinite(e.train) || !std::isfinite(e.validation)) {
            throw Error(ErrorCode::Divergence, "loss became non-finite at epoch " + std::to_string(epoch));
        }
        losses.push_back(e);
    };
    record(0);

    Adam adam;
    adam.lr = config.learning_rate;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x_train.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Grads g;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t k = order.size(); k > 1; --k) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k - 1)));
            std::swap(order[k - 1], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const auto stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const auto bs = static_cast<Eigen::Index>(stop - start);
            Eigen::MatrixXd xb(x_train.rows(), bs);
            Eigen::MatrixXd yb(1, bs);
            for (Eigen::Index c = 0; c < bs; ++c) {
                const auto src = order[start + static_cast<std::size_t>(c)];
                xb.col(c) = x_train.col(src);
                yb(0, c) = y_train(0, src);
            }
            const double loss = loss_and_grads(w, xb, yb, g);
            if (!std::isfinite(loss)) {
                throw Error(ErrorCode::Divergence, "loss became non-finite at epoch " + std::to_string(epoch));
            }
            const double norm = std::sqrt(g.wx.squaredNorm() + g.wh.squaredNorm() + g.b.squaredNorm() +
                                          g.wy.squaredNorm() + g.by.squaredNorm());
            if (norm > config.clip_norm) {
                const double s = config.clip_norm / norm;
                for (auto* m : {&g.wx, &g.wh, &g.b, &g.wy, &g.by}) *m *= s;
            }
            adam.update({&w.wx, &w.wh, &w.b, &w.wy, &w.by}, {&g.wx, &g.wh, &g.b, &g.wy, &g.by});
        }
        record(epoch);
    }
    return ForecastModel::lstm(std::move(w), config.window, std::move(losses));
}

ForecastModel train_lstm(const energy::HarvesterTrace& trace, const LstmConfig& config) {
    const auto powers = trace.powers();
    return train_lstm(std::span<const double>(powers), config);
}

ForecastModel make_model(ModelKind kind, std::span<const double> series_mw, const LstmConfig& config,
                         double ewma_beta) {
    switch (kind) {
        case ModelKind::Lstm: return train_lstm(series_mw, config);
        case ModelKind::Persistence: return ForecastModel::persistence(1);
        case ModelKind::Ewma: return ForecastModel::ewma(ewma_beta, config.window);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown model kind");
}

std::vector<Prediction> evaluate(const ForecastModel& model, const energy::HarvesterTrace& trace) {
    const auto powers = trace.powers();
    const auto window = static_cast<std::size_t>(model.window());
    std::vector<Prediction> out;
    for (std::size_t t = window; t < powers.size(); ++t) {
        const std::span<const double> history(powers.data() + t - window, window);
        out.push_back({trace.samples()[t].time_s, powers[t], model.predict(history)});
    }
    return out;
}

double rmse(const std::vector<Prediction>& predictions) {
    if (predictions.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& p : predictions) acc += (p.predicted_mw - p.actual_mw) * (p.predicted_mw - p.actual_mw);
    return std::sqrt(acc / static_cast<double>(predictions.size()));
}

DeviceState estimate_state(double predicted_power_mw, const EstimatorParams& params, double last_energy_j) {
    energy::EnergyBuffer b = params.buffer;
    b.energy_j = std::clamp(last_energy_j, 0.0, b.max_energy_j);
    const auto slots = std::max<long long>(1, std::llround(params.horizon_s / params.slot_s));
    if (slots <= 1000) {
        for (long long k = 0; k < slots; ++k) energy::step_buffer(b, predicted_power_mw, params.slot_s);
    } else {
        // Closed form of the slot recurrence; the cap is absorbing because the
        // recurrence is monotone.
        const double keep = std::pow(1.0 - b.leakage_fraction, static_cast<double>(slots));
        const double gain = b.efficiency * mw_to_w(predicted_power_mw) * params.slot_s;
        const double filled = b.leakage_fraction > 0.0 ? gain * (1.0 - keep) / b.leakage_fraction
                                                       : gain * static_cast<double>(slots);
        b.energy_j = std::min(b.max_energy_j, keep * b.energy_j + filled);
    }
    return b.usable_energy_j() <= params.threshold_j ? DeviceState::LowPower : DeviceState::Normal;
}

double update_alpha(std::span<const std::pair<DeviceState, DeviceState>> estimate_log, std::size_t horizon) {
    if (estimate_log.empty()) throw Error(ErrorCode::InvalidArgument, "estimate log is empty");
    const std::size_t n = std::min(horizon, estimate_log.size());
    std::size_t correct = 0;
    for (std::size_t k = estimate_log.size() - n; k < estimate_log.size(); ++k) {
        if (estimate_log[k].first == estimate_log[k].second) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

AlphaTracker::AlphaTracker(std::size_t horizon, double initial) : horizon_(std::max<std::size_t>(1, horizon)), initial_(initial) {}

void AlphaTracker::record(DeviceState predicted, DeviceState actual) {
    const bool hit = predicted == actual;
    hits_.push_back(hit);
    correct_ += hit ? 1 : 0;
    if (hits_.size() > horizon_) {
        correct_ -= hits_.front() ? 1 : 0;
        hits_.pop_front();
    }
}

double AlphaTracker::alpha() const {
    if (hits_.empty()) return initial_;
    return static_cast<double>(correct_) / static_cast<double>(hits_.size());
}

}  // namespace blis::forecast
