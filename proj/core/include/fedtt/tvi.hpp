#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "fedtt/graph.hpp"
#include "fedtt/mlp.hpp"
#include "fedtt/traffic.hpp"

namespace fedtt {

// A size-i combination of available sensors at one timestep, carrying the
// observed feature vector of each member.
struct SubView {
    std::size_t level = 0;
    std::vector<std::pair<std::size_t, std::vector<double>>> members;
};

struct TrafficView {
    std::size_t time = 0;
    std::map<std::size_t, std::vector<SubView>> subviews;  // level -> sampled combinations
};

struct TviConfig {
    std::size_t heads = 2;           // feature heads (scales up to 8)
    std::size_t head_dim = 8;        // per-head width (scales up to 128)
    std::size_t feature_hidden = 16; // hidden width of the distance-feature net
    std::size_t subview_budget = 8;  // sampled combinations per level
    std::size_t temporal_window = 12;  // T
    std::uint64_t seed = 1;
};

// Spatial view extension: a distance-row feature network producing K x F2
// per-sensor features, and an affine extension head mapping the averaged
// feature/value outer product to a full |M| x F1 frame.
struct SpatialModelParams {
    std::size_t sensors = 0;
    std::size_t features = 0;  // F1
    std::size_t heads = 0;     // K
    std::size_t head_dim = 0;  // F2
    Mlp feature_net;           // |M| -> hidden -> K*F2
    Mlp extension_head;        // K*F2*F1 -> |M|*F1, single affine layer

    static SpatialModelParams make(std::size_t sensors, std::size_t features,
                                   const TviConfig& cfg, Rng& rng);

    std::size_t param_count() const;
    std::vector<double> pack() const;
    void unpack(std::span<const double> packed);
};

// Per-sensor linear autoregression over T lags; weights shared across
// sensors and features. Reference temporal predictor.
struct ArPredictor {
    std::vector<double> weights;  // one per lag, nearest frame last
    double bias = 0.0;

    Mat predict(std::span<const Mat> window) const;
};

struct TemporalModelParams {
    std::size_t window = 12;  // T
    ArPredictor forward_predictor;
    ArPredictor backward_predictor;

    static TemporalModelParams make(std::size_t window);

    std::size_t param_count() const { return 2 * (window + 1); }
    std::vector<double> pack() const;
    void unpack(std::span<const double> packed);
};

// Uniformly samples, per level i in 1..|Mt|, up to `budget` distinct i-sized
// combinations of the available sensors. Deterministic under seed.
TrafficView build_subviews(const TrafficFrame& frame, std::size_t budget, std::uint64_t seed);

// Per-sensor K*F2 feature from the normalized distance row.
std::vector<std::vector<double>> sensor_features(const DistanceMatrix& dist,
                                                 const SpatialModelParams& params);

// Extends the view to all |M| sensors and composes with the observations:
// available rows equal the input frame exactly.
TrafficFrame spatial_extend(const TrafficFrame& frame, const TrafficView& view,
                            const std::vector<std::vector<double>>& features,
                            const SpatialModelParams& params);

TrainTrace train_spatial(SpatialModelParams& params, const TrafficSeries& series,
                         const DistanceMatrix& dist, const OptConfig& opt,
                         std::size_t subview_budget, std::uint64_t seed);

// Packed-parameter loss over a series; exposed for gradient verification.
double spatial_loss(const SpatialModelParams& params, const TrafficSeries& series,
                    const std::vector<TrafficView>& views, const DistanceMatrix& dist,
                    std::vector<double>* grad);

using FramePredictorFn = std::function<Mat(std::span<const Mat>)>;

// Averages forward and backward one-step predictions at time t over the
// extended series and composes with the observations. Falls back to the
// single available direction when one side lacks T frames; errors when
// neither side has enough context.
TrafficFrame temporal_enhance(const TrafficSeries& extended, std::size_t t,
                              const TemporalModelParams& params);
TrafficFrame temporal_enhance_with(const TrafficSeries& extended, std::size_t t,
                                   std::size_t window, const FramePredictorFn& forward,
                                   const FramePredictorFn& backward);

TrainTrace train_temporal(TemporalModelParams& params, const TrafficSeries& extended,
                          const OptConfig& opt);

double temporal_loss(const TemporalModelParams& params, const TrafficSeries& extended,
                     std::vector<double>* grad);

// Full pipeline: spatial extension then temporal enhancement per frame.
// Observed entries are preserved exactly; output frames are fully available
// with the imputed mask recording which rows were filled in.
TrafficSeries impute(const TrafficSeries& series, const SpatialModelParams& sv,
                     const TemporalModelParams& tv, const DistanceMatrix& dist,
                     std::size_t subview_budget, std::uint64_t seed);

}  // namespace fedtt
