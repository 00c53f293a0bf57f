#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedtt/mlp.hpp"
#include "fedtt/traffic.hpp"

namespace fedtt {

// Downstream traffic predictor behind a uniform contract: fit on prediction
// windows, then map T input frames to T' output frames. Implementations are
// exchangeable inside the federated runtime.
class PredictorModel {
public:
    virtual ~PredictorModel() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t input_window() const = 0;
    virtual std::size_t horizon() const = 0;

    virtual TrainTrace fit(const std::vector<PredictionWindow>& windows, const OptConfig& opt) = 0;
    virtual std::vector<Mat> predict(std::span<const TrafficFrame> input) const = 0;

    virtual std::unique_ptr<PredictorModel> clone() const = 0;

    // Parameter blocks for checkpoint serialization, declaration order.
    virtual std::vector<Mat> param_blocks() const = 0;
    virtual void set_param_blocks(const std::vector<Mat>& blocks) = 0;
};

// Every output step equals the mean of the input window. No parameters.
class HistoricalMeanModel final : public PredictorModel {
public:
    HistoricalMeanModel(std::size_t t_in, std::size_t t_out) : t_in_(t_in), t_out_(t_out) {}

    std::string kind() const override { return "historical_mean"; }
    std::size_t input_window() const override { return t_in_; }
    std::size_t horizon() const override { return t_out_; }

    TrainTrace fit(const std::vector<PredictionWindow>& windows, const OptConfig& opt) override;
    std::vector<Mat> predict(std::span<const TrafficFrame> input) const override;
    std::unique_ptr<PredictorModel> clone() const override {
        return std::make_unique<HistoricalMeanModel>(*this);
    }
    std::vector<Mat> param_blocks() const override { return {}; }
    void set_param_blocks(const std::vector<Mat>& blocks) override;

private:
    std::size_t t_in_, t_out_;
};

// Direct multi-step linear autoregression: one (weights, bias) head per
// horizon step, weights shared across sensors and features. Convex in its
// parameters under the MAE objective.
class LinearArModel final : public PredictorModel {
public:
    LinearArModel(std::size_t t_in, std::size_t t_out);

    std::string kind() const override { return "linear_ar"; }
    std::size_t input_window() const override { return t_in_; }
    std::size_t horizon() const override { return t_out_; }

    TrainTrace fit(const std::vector<PredictionWindow>& windows, const OptConfig& opt) override;
    std::vector<Mat> predict(std::span<const TrafficFrame> input) const override;
    std::unique_ptr<PredictorModel> clone() const override {
        return std::make_unique<LinearArModel>(*this);
    }
    std::vector<Mat> param_blocks() const override;
    void set_param_blocks(const std::vector<Mat>& blocks) override;

    // Packed as [w`0 (T), b0, w1 (T), b1, ...]; exposed for oracles.
    std::vector<double> packed;

    double loss(const std::vector<PredictionWindow>& windows,
                const std::vector<double>& params, std::vector<double>* grad) const;

private:
    std::size_t t_in_, t_out_;
};

std::unique_ptr<PredictorModel> make_predictor(const std::string& kind, std::size_t t_in,
                                               std::size_t t_out);

struct EvalMetrics {
    std::vector<double> mae_per_feature;        // horizon-averaged, per feature column
    std::vector<double> rmse_per_feature;
    std::vector<double> mae_final_step;         // at the last horizon step only
    std::vector<double> rmse_final_step;
    double mae_overall = 0.0;
    double rmse_overall = 0.0;
};

EvalMetrics evaluate(const PredictorModel& model, const std::vector<PredictionWindow>& windows);

}  // namespace fedtt
