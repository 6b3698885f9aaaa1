#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "blis/common.hpp"
#include "blis/energy_model.hpp"
#include "blis/protocol.hpp"

namespace blis::forecast {

using protocol::DeviceState;

enum class ModelKind : std::uint8_t { Lstm, Persistence, Ewma };

const char* to_string(ModelKind k);
std::optional<ModelKind> parse_model_kind(std::string_view s);

inline constexpr int kMaxWindow = 10;

struct LstmConfig {
    double learning_rate = 0.001;
    int epochs = 400;
    int window = 10;
    int hidden_size = 32;
    int batch_size = 32;
    double train_fraction = 0.8;
    double clip_norm = 5.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochLoss {
    int epoch = 0;  // 0 is the untrained network
    double train = 0.0;
    double validation = 0.0;
};

/// Single-layer LSTM with one dense output unit, on min-max normalized input.
struct LstmWeights {
    Eigen::MatrixXd wx;  // 4H x 1, gate order i, f, g, o
    Eigen::MatrixXd wh;  // 4H x H
    Eigen::MatrixXd b;   // 4H x 1
    Eigen::MatrixXd wy;  // 1 x H
    Eigen::MatrixXd by;  // 1 x 1
    double lo = 0.0;
    double scale = 1.0;

    int hidden() const { return static_cast<int>(wh.cols()); }
    /// Forward pass over a batch: column b of x is one input window.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
};

class ForecastModel {
public:
    static ForecastModel persistence(int window = 1);
    static ForecastModel ewma(double beta, int window = kMaxWindow);
    static ForecastModel lstm(LstmWeights weights, int window, std::vector<EpochLoss> losses);

    ModelKind kind() const { return kind_; }
    int window() const { return window_; }
    double beta() const { return beta_; }
    const std::vector<EpochLoss>& losses() const { return losses_; }
    const std::optional<LstmWeights>& weights() const { return weights_; }

    /// One-step-ahead power forecast in mW, clamped at 0. history holds
    /// exactly window() samples, oldest first; otherwise throws WrongWindow.
    double predict(std::span<const double> history) const;

private:
    ModelKind kind_ = ModelKind::Persistence;
    int window_ = 1;
    double beta_ = 0.5;
    std::optional<LstmWeights> weights_;
    std::vector<EpochLoss> losses_;
};

/// Throws InsufficientData if the trace is shorter than 10x the window and
/// Divergence if the loss becomes non-finite.
ForecastModel train_lstm(std::span<const double> series_mw, const LstmConfig& config);
ForecastModel train_lstm(const energy::HarvesterTrace& trace, const LstmConfig& config);

/// Builds the requested model; the baselines need no training.
ForecastModel make_model(ModelKind kind, std::span<const double> series_mw, const LstmConfig& config,
                         double ewma_beta = 0.5);

struct Prediction {
    double t_s = 0.0;
    double actual_mw = 0.0;
    double predicted_mw = 0.0;
};

/// Rolling one-step predictions for every sample that has a full window of history.
std::vector<Prediction> evaluate(const ForecastModel& model, const energy::HarvesterTrace& trace);
double rmse(const std::vector<Prediction>& predictions);

struct EstimatorParams {
    energy::EnergyBuffer buffer;  // combined store as seen by the aggregator
    double threshold_j = 0.0;
    double slot_s = 0.01;
    double horizon_s = 1.0;  // one beacon interval
};

/// Rolls the predicted power through buffer_step for one horizon starting
/// from last_energy_j and applies the device-state threshold.
DeviceState estimate_state(double predicted_power_mw, const EstimatorParams& params, double last_energy_j);

/// Fraction of correct predictions among the last `horizon` entries.
double update_alpha(std::span<const std::pair<DeviceState, DeviceState>> estimate_log, std::size_t horizon = 100);

class AlphaTracker {
public:
    explicit AlphaTracker(std::size_t horizon = 100, double initial = 1.0);
    void record(DeviceState predicted, DeviceState actual);
    /// Rolling accuracy; the initial value until the first record.
    double alpha() const;
    std::size_t samples() const { return hits_.size(); }

private:
    std::size_t horizon_;
    double initial_;
    std::deque<bool> hits_;
    std::size_t correct_ = 0;
};

}  // namespace blis::forecast
