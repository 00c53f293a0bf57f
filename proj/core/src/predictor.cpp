#include "fedtt/predictor.hpp"

#include <cmath>

namespace fedtt {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_windows(const std::vector<PredictionWindow>& windows, std::size_t t_in,
                   std::size_t t_out) {
    if (windows.empty()) throw DataError("predictor: empty window set");
    for (const PredictionWindow& w : windows) {
        if (w.input.size() != t_in || w.target.size() != t_out)
            throw DataError("predictor: window sizes disagree with the model contract");
    }
}

}  // namespace

TrainTrace HistoricalMeanModel::fit(const std::vector<PredictionWindow>& windows,
                                    const OptConfig& opt) {
    check_windows(windows, t_in_, t_out_);
    TrainTrace trace;
    if (opt.epochs == 0) return trace;
    // Parameterless: the loss is a constant of the data.
    double total = 0.0;
    std::size_t count = 0;
    for (const PredictionWindow& w : windows) {
        const auto preds = predict(w.input);
        for (std::size_t h = 0; h < t_out_; ++h) {
            const TrafficFrame& truth = w.target[h];
            for (std::size_t s = 0; s < truth.sensors(); ++s) {
                if (!truth.available(s)) continue;
                for (std::size_t f = 0; f < truth.features(); ++f) {
                    total += std::abs(preds[h](s, f) - truth.values(s, f));
                    ++count;
                }
            }
        }
    }
    const double loss = count ? total / static_cast<double>(count) : 0.0;
    trace.initial_loss = loss;
    trace.losses.assign(opt.epochs, loss);
    return trace;
}

std::vector<Mat> HistoricalMeanModel::predict(std::span<const TrafficFrame> input) const {
    if (input.size() != t_in_) throw DataError("predict: wrong input length");
    Mat mean(input.front().sensors(), input.front().features());
    for (const TrafficFrame& f : input) mean += f.values;
    mean *= 1.0 / static_cast<double>(t_in_);
    return std::vector<Mat>(t_out_, mean);
}

void HistoricalMeanModel::set_param_blocks(const std::vector<Mat>& blocks) {
    if (!blocks.empty()) throw DataError("historical_mean model has no parameters");
}

LinearArModel::LinearArModel(std::size_t t_in, std::size_t t_out)
    : packed((t_in + 1) * t_out, 0.0), t_in_(t_in), t_out_(t_out) {}

double LinearArModel::loss(const std::vector<PredictionWindow>& windows,
                           const std::vector<double>& params, std::vector<double>* grad) const {
    if (grad) grad->assign(params.size(), 0.0);
    double total = 0.0;
    std::size_t count = 0;
    for (const PredictionWindow& w : windows) {
        for (std::size_t h = 0; h < t_out_; ++h) {
            const std::size_t off = h * (t_in_ + 1);
            const TrafficFrame& truth = w.target[h];
            for (std::size_t s = 0; s < truth.sensors(); ++s) {
                if (!truth.available(s)) continue;
                for (std::size_t f = 0; f < truth.features(); ++f) {
                    double pred = params[off + t_in_];
                    for (std::size_t l = 0; l < t_in_; ++l)
                        pred += params[off + l] * w.input[l].values(s, f);
                    const double e = pred - truth.values(s, f);
                    total += std::abs(e);
                    ++count;
                    if (grad) {
                        const double d = sign_of(e);
                        for (std::size_t l = 0; l < t_in_; ++l)
                            (*grad)[off + l] += d * w.input[l].values(s, f);
                        (*grad)[off + t_in_] += d;
                    }
                }
            }
        }
    }
    if (count == 0) throw DataError("predictor loss: no available target entries");
    const double inv = 1.0 / static_cast<double>(count);
    if (grad)
        for (double& g : *grad) g *= inv;
    return total * inv;
}

TrainTrace LinearArModel::fit(const std::vector<PredictionWindow>& windows,
                              const OptConfig& opt) {
    check_windows(windows, t_in_, t_out_);
    const LossFn fn = [&](const std::vector<double>& p, std::vector<double>* g) {
        return loss(windows, p, g);
    };
    return descend(packed, fn, opt);
}

std::vector<Mat> LinearArModel::predict(std::span<const TrafficFrame> input) const {
    if (input.size() != t_in_) throw DataError("predict: wrong input length");
    const std::size_t sensors = input.front().sensors();
    const std::size_t features = input.front().features();
    std::vector<Mat> out;
    out.reserve(t_out_);
    for (std::size_t h = 0; h < t_out_; ++h) {
        const std::size_t off = h * (t_in_ + 1);
        Mat m(sensors, features, packed[off + t_in_]);
        for (std::size_t l = 0; l < t_in_; ++l) {
            const double w = packed[off + l];
            const Mat& x = input[l].values;
            for (std::size_t i = 0; i < m.size(); ++i) m[i] += w * x[i];
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Mat> LinearArModel::param_blocks() const {
    Mat block(t_out_, t_in_ + 1);
    for (std::size_t i = 0; i < packed.size(); ++i) block[i] = packed[i];
    return {block};
}

void LinearArModel::set_param_blocks(const std::vector<Mat>& blocks) {
    if (blocks.size() != 1 || blocks[0].rows() != t_out_ || blocks[0].cols() != t_in_ + 1)
        throw DataError("linear_ar checkpoint: parameter block shape mismatch");
    for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = blocks[0][i];
}

std::unique_ptr<PredictorModel> make_predictor(const std::string& kind, std::size_t t_in,
                                               std::size_t t_out) {
    if (kind == "historical_mean") return std::make_unique<HistoricalMeanModel>(t_in, t_out);
    if (kind == "linear_ar") return std::make_unique<LinearArModel>(t_in, t_out);
    throw DataError("unknown predictor kind: " + kind);
}

EvalMetrics evaluate(const PredictorModel& model, const std::vector<PredictionWindow>& windows) {
    if (windows.empty()) throw DataError("evaluate: empty window set");
    std::vector<TrafficFrame> preds_all, truth_all, preds_last, truth_last;
    for (const PredictionWindow& w : windows) {
        const auto preds = model.predict(w.input);
        for (std::size_t h = 0; h < preds.size(); ++h) {
            TrafficFrame pf(preds[h].rows(), preds[h].cols());
            pf.values = preds[h];
            preds_all.push_back(pf);
            truth_all.push_back(w.target[h]);
            if (h + 1 == preds.size()) {
                preds_last.push_back(pf);
                truth_last.push_back(w.target[h]);
            }
        }
    }
    EvalMetrics m;
    m.mae_per_feature = mae_per_feature(preds_all, truth_all);
    m.rmse_per_feature = rmse_per_feature(preds_all, truth_all);
    m.mae_final_step = mae_per_feature(preds_last, truth_last);
    m.rmse_final_step = rmse_per_feature(preds_last, truth_last);
    m.mae_overall = mae(preds_all, truth_all);
    m.rmse_overall = rmse(preds_all, truth_all);
    return m;
}

}  // namespace fedtt
