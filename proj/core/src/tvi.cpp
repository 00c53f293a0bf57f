#include "fedtt/tvi.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fedtt/rng.hpp"

namespace fedtt {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// C(n, k) clamped at `cap`; avoids overflow for the comparison against the
// sampling budget.
std::size_t binomial_clamped(std::size_t n, std::size_t k, std::size_t cap) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
        if (c > static_cast<double>(cap)) return cap + 1;
    }
    return static_cast<std::size_t>(c + 0.5);
}

void enumerate_combinations(const std::vector<std::size_t>& pool, std::size_t k,
                            std::vector<std::vector<std::size_t>>& out) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        std::vector<std::size_t> combo(k);
        for (std::size_t i = 0; i < k; ++i) combo[i] = pool[idx[i]];
        out.push_back(std::move(combo));
        std::size_t i = k;
        while (i-- > 0) {
            if (idx[i] != i + pool.size() - k) {
                ++idx[i];
                for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
                break;
            }
            if (i == 0) return;
        }
    }
}

}  // namespace

TrafficView build_subviews(const TrafficFrame& frame, std::size_t budget, std::uint64_t seed) {
    std::vector<std::size_t> avail;
    for (std::size_t s = 0; s < frame.sensors(); ++s)
        if (frame.available(s)) avail.push_back(s);
    if (avail.empty()) throw DataError("build_subviews: frame has zero available sensors");
    if (budget == 0) throw DataError("build_subviews: budget must be positive");

    Rng rng(seed);
    TrafficView view;
    auto member_of = [&](std::size_t sensor) {
        std::vector<double> v(frame.features());
        for (std::size_t f = 0; f < frame.features(); ++f) v[f] = frame.values(sensor, f);
        return std::make_pair(sensor, std::move(v));
    };

    for (std::size_t level = 1; level <= avail.size(); ++level) {
        std::vector<std::vector<std::size_t>> combos;
        if (binomial_clamped(avail.size(), level, budget) <= budget) {
            enumerate_combinations(avail, level, combos);
        } else {
            std::set<std::vector<std::size_t>> seen;
            std::vector<std::size_t> pool = avail;
            while (seen.size() < budget) {
                // Partial Fisher-Yates draw of `level` distinct sensors.
                for (std::size_t i = 0; i < level; ++i) {
                    const std::size_t j = i + static_cast<std::size_t>(
                                                  rng.uniform_index(pool.size() - i));
                    std::swap(pool[i], pool[j]);
                }
                std::vector<std::size_t> combo(pool.begin(), pool.begin() + level);
                std::sort(combo.begin(), combo.end());
                seen.insert(std::move(combo));
            }
            combos.assign(seen.begin(), seen.end());
        }
        std::vector<SubView>& slot = view.subviews[level];
        slot.reserve(combos.size());
        for (auto& combo : combos) {
            SubView sv;
            sv.level = level;
            sv.members.reserve(level);
            for (std::size_t s : combo) sv.members.push_back(member_of(s));
            slot.push_back(std::move(sv));
        }
    }
    return view;
}

SpatialModelParams SpatialModelParams::make(std::size_t sensors, std::size_t features,
                                            const TviConfig& cfg, Rng& rng) {
    SpatialModelParams p;
    p.sensors = sensors;
    p.features = features;
    p.heads = cfg.heads;
    p.head_dim = cfg.head_dim;
    p.feature_net = Mlp({sensors, cfg.feature_hidden, cfg.heads * cfg.head_dim});
    p.extension_head = Mlp({cfg.heads * cfg.head_dim * features, sensors * features});
    p.feature_net.init(rng);
    p.extension_head.init(rng);
    return p;
}

std::size_t SpatialModelParams::param_count() const {
    return feature_net.param_count() + extension_head.param_count();
}

std::vector<double> SpatialModelParams::pack() const {
    std::vector<double> out;
    out.reserve(param_count());
    out.insert(out.end(), feature_net.params.begin(), feature_net.params.end());
    out.insert(out.end(), extension_head.params.begin(), extension_head.params.end());
    return out;
}

void SpatialModelParams::unpack(std::span<const double> packed) {
    if (packed.size() != param_count())
        throw std::invalid_argument("SpatialModelParams::unpack: size mismatch");
    std::copy(packed.begin(), packed.begin() + feature_net.param_count(),
              feature_net.params.begin());
    std::copy(packed.begin() + feature_net.param_count(), packed.end(),
              extension_head.params.begin());
}

std::vector<std::vector<double>> sensor_features(const DistanceMatrix& dist,
                                                 const SpatialModelParams& params) {
    if (dist.size() != params.sensors)
        throw std::invalid_argument("sensor_features: distance matrix side differs from sensor count");
    std::vector<std::vector<double>> out(params.sensors);
    for (std::size_t s = 0; s < params.sensors; ++s)
        out[s] = params.feature_net.forward(dist.normalized_row(s));
    return out;
}

namespace {

// Shared forward pass of the extension over one view. When `grads` is given,
// also backpropagates d(loss)/d(sv) into the extension head and the
// per-sensor feature gradients.
struct ExtendWork {
    const SpatialModelParams& params;
    const std::vector<std::vector<double>>& features;

    Mat run(const TrafficView& view) const {
        const std::size_t kd = params.heads * params.head_dim;
        const std::size_t f1 = params.features;
        Mat sv(params.sensors, f1);
        if (view.subviews.empty()) return sv;
        std::vector<double> inner(kd * f1);
        std::vector<double> level_acc(params.sensors * f1);
        for (const auto& [level, combos] : view.subviews) {
            std::fill(level_acc.begin(), level_acc.end(), 0.0);
            for (const SubView& combo : combos) {
                std::fill(inner.begin(), inner.end(), 0.0);
                const double inv_members = 1.0 / static_cast<double>(combo.members.size());
                for (const auto& [sensor, value] : combo.members) {
                    const std::vector<double>& h = features[sensor];
                    for (std::size_t a = 0; a < kd; ++a)
                        for (std::size_t f = 0; f < f1; ++f)
                            inner[a * f1 + f] += inv_members * h[a] * value[f];
                }
                const std::vector<double> out = params.extension_head.forward(inner);
                for (std::size_t i = 0; i < out.size(); ++i) level_acc[i] += out[i];
            }
            const double inv_combos = 1.0 / static_cast<double>(combos.size());
            for (std::size_t i = 0; i < level_acc.size(); ++i)
                sv[i] += inv_combos * level_acc[i];
        }
        const double inv_levels = 1.0 / static_cast<double>(view.subviews.size());
        sv *= inv_levels;
        return sv;
    }

    // dsv: gradient w.r.t. the pre-composition extension output.
    void backward(const TrafficView& view, const Mat& dsv, std::vector<double>& d_head,
                  std::vector<std::vector<double>>& d_features) const {
        if (view.subviews.empty()) return;
        const std::size_t kd = params.heads * params.head_dim;
        const std::size_t f1 = params.features;
        const double inv_levels = 1.0 / static_cast<double>(view.subviews.size());
        std::vector<double> inner(kd * f1);
        for (const auto& [level, combos] : view.subviews) {
            const double scale = inv_levels / static_cast<double>(combos.size());
            std::vector<double> dout(params.sensors * f1);
            for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = scale * dsv[i];
            for (const SubView& combo : combos) {
                std::fill(inner.begin(), inner.end(), 0.0);
                const double inv_members = 1.0 / static_cast<double>(combo.members.size());
                for (const auto& [sensor, value] : combo.members) {
                    const std::vector<double>& h = features[sensor];
                    for (std::size_t a = 0; a < kd; ++a)
                        for (std::size_t f = 0; f < f1; ++f)
                            inner[a * f1 + f] += inv_members * h[a] * value[f];
                }
                Mlp::Cache cache;
                params.extension_head.forward(inner, cache);
                const std::vector<double> dinner =
                    params.extension_head.backward(cache, dout, d_head);
                for (const auto& [sensor, value] : combo.members) {
                    std::vector<double>& dh = d_features[sensor];
                    for (std::size_t a = 0; a < kd; ++a) {
                        double acc = 0.0;
                        for (std::size_t f = 0; f < f1; ++f)
                            acc += dinner[a * f1 + f] * value[f];
                        dh[a] += inv_members * acc;
                    }
                }
            }
        }
    }
};

TrafficFrame compose_with_observations(const TrafficFrame& frame, const Mat& predicted) {
    TrafficFrame out = frame;
    for (std::size_t s = 0; s < frame.sensors(); ++s) {
        if (frame.available(s)) continue;
        for (std::size_t f = 0; f < frame.features(); ++f)
            out.values(s, f) = predicted(s, f);
    }
    return out;
}

}  // namespace

TrafficFrame spatial_extend(const TrafficFrame& frame, const TrafficView& view,
                            const std::vector<std::vector<double>>& features,
                            const SpatialModelParams& params) {
    if (view.subviews.empty()) throw DataError("spatial_extend: empty view");
    if (frame.sensors() != params.sensors || frame.features() != params.features)
        throw std::invalid_argument("spatial_extend: frame shape differs from model");
    if (features.size() != params.sensors)
        throw std::invalid_argument("spatial_extend: feature table size differs from model");
    ExtendWork work{params, features};
    return compose_with_observations(frame, work.run(view));
}

double spatial_loss(const SpatialModelParams& params, const TrafficSeries& series,
                    const std::vector<TrafficView>& views, const DistanceMatrix& dist,
                    std::vector<double>* grad) {
    if (series.size() != views.size())
        throw std::invalid_argument("spatial_loss: one view per frame required");
    const std::size_t f1 = params.features;

    // Feature forward passes are shared by every frame.
    std::vector<Mlp::Cache> feat_caches(params.sensors);
    std::vector<std::vector<double>> features(params.sensors);
    for (std::size_t s = 0; s < params.sensors; ++s)
        features[s] = params.feature_net.forward(dist.normalized_row(s), feat_caches[s]);

    ExtendWork work{params, features};
    std::vector<std::vector<double>> d_features;
    std::vector<double> d_head;
    if (grad) {
        d_features.assign(params.sensors,
                          std::vector<double>(params.heads * params.head_dim, 0.0));
        d_head.assign(params.extension_head.param_count(), 0.0);
    }

    double total = 0.0;
    std::size_t counted_frames = 0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const TrafficFrame& frame = series.frames[t];
        const std::size_t avail = frame.available_count();
        if (avail == 0) continue;
        const Mat sv = work.run(views[t]);
        const double norm = static_cast<double>(avail * f1);
        double frame_loss = 0.0;
        Mat dsv(params.sensors, f1);
        for (std::size_t s = 0; s < frame.sensors(); ++s) {
            if (!frame.available(s)) continue;
            for (std::size_t f = 0; f < f1; ++f) {
                const double e = sv(s, f) - frame.values(s, f);
                frame_loss += std::abs(e);
                if (grad) dsv(s, f) = sign_of(e) / norm;
            }
        }
        total += frame_loss / norm;
        ++counted_frames;
        if (grad) work.backward(views[t], dsv, d_head, d_features);
    }
    if (counted_frames == 0) throw DataError("spatial_loss: no frame with available sensors");
    const double inv_frames = 1.0 / static_cast<double>(counted_frames);

    if (grad) {
        grad->assign(params.param_count(), 0.0);
        std::vector<double> d_featnet(params.feature_net.param_count(), 0.0);
        for (std::size_t s = 0; s < params.sensors; ++s) {
            bool nonzero = false;
            for (double v : d_features[s])
                if (v != 0.0) {
                    nonzero = true;
                    break;
                }
            if (!nonzero) continue;
            for (double& v : d_features[s]) v *= inv_frames;
            params.feature_net.backward(feat_caches[s], d_features[s], d_featnet);
        }
        for (std::size_t i = 0; i < d_featnet.size(); ++i) (*grad)[i] = d_featnet[i];
        const std::size_t off = params.feature_net.param_count();
        for (std::size_t i = 0; i < d_head.size(); ++i) (*grad)[off + i] = d_head[i] * inv_frames;
    }
    return total * inv_frames;
}

TrainTrace train_spatial(SpatialModelParams& params, const TrafficSeries& series,
                         const DistanceMatrix& dist, const OptConfig& opt,
                         std::size_t subview_budget, std::uint64_t seed) {
    if (series.empty()) throw DataError("train_spatial: empty series");
    std::vector<TrafficView> views;
    views.reserve(series.size());
    for (std::size_t t = 0; t < series.size(); ++t)
        views.push_back(build_subviews(series.frames[t], subview_budget, Rng::mix(seed, t)));

    std::vector<double> packed = params.pack();
    SpatialModelParams scratch = params;
    const LossFn fn = [&](const std::vector<double>& p, std::vector<double>* g) {
        scratch.unpack(p);
        return spatial_loss(scratch, series, views, dist, g);
    };
    TrainTrace trace = descend(packed, fn, opt);
    params.unpack(packed);
    return trace;
}

Mat ArPredictor::predict(std::span<const Mat> window) const {
    if (window.size() != weights.size())
        throw std::invalid_argument("ArPredictor: window length differs from lag count");
    if (window.empty()) throw std::invalid_argument("ArPredictor: empty window");
    Mat out(window.front().rows(), window.front().cols(), bias);
    for (std::size_t l = 0; l < window.size(); ++l) {
        const Mat& m = window[l];
        for (std::size_t i = 0; i < m.size(); ++i) out[i] += weights[l] * m[i];
    }
    return out;
}

TemporalModelParams TemporalModelParams::make(std::size_t window) {
    TemporalModelParams p;
    p.window = window;
    p.forward_predictor.weights.assign(window, 0.0);
    p.backward_predictor.weights.assign(window, 0.0);
    return p;
}

std::vector<double> TemporalModelParams::pack() const {
    std::vector<double> out;
    out.reserve(param_count());
    out.insert(out.end(), forward_predictor.weights.begin(), forward_predictor.weights.end());
    out.push_back(forward_predictor.bias);
    out.insert(out.end(), backward_predictor.weights.begin(), backward_predictor.weights.end());
    out.push_back(backward_predictor.bias);
    return out;
}

void TemporalModelParams::unpack(std::span<const double> packed) {
    if (packed.size() != param_count())
        throw std::invalid_argument("TemporalModelParams::unpack: size mismatch");
    forward_predictor.weights.assign(packed.begin(), packed.begin() + window);
    forward_predictor.bias = packed[window];
    backward_predictor.weights.assign(packed.begin() + window + 1,
                                      packed.begin() + 2 * window + 1);
    backward_predictor.bias = packed[2 * window + 1];
}

namespace {

// Window values ordered nearest-frame-last: forward reads t-T..t-1,
// backward reads t+T..t+1.
std::vector<Mat> collect_window(const TrafficSeries& s, std::size_t t, std::size_t window,
                                bool forward) {
    std::vector<Mat> out;
    out.reserve(window);
    if (forward) {
        for (std::size_t k = t - window; k < t; ++k) out.push_back(s.frames[k].values);
    } else {
        for (std::size_t k = t + window; k > t; --k) out.push_back(s.frames[k].values);
    }
    return out;
}

}  // namespace

TrafficFrame temporal_enhance_with(const TrafficSeries& extended, std::size_t t,
                                   std::size_t window, const FramePredictorFn& forward,
                                   const FramePredictorFn& backward) {
    if (t >= extended.size()) throw DataError("temporal_enhance: index out of range");
    const bool has_fwd = t >= window;
    const bool has_bwd = t + window < extended.size();
    if (!has_fwd && !has_bwd)
        throw DataError("temporal_enhance: insufficient context frames on both sides");

    const TrafficFrame& frame = extended.frames[t];
    Mat tv;
    if (has_fwd && has_bwd) {
        const auto fw = collect_window(extended, t, window, true);
        const auto bw = collect_window(extended, t, window, false);
        Mat ntv = forward(fw);
        const Mat ptv = backward(bw);
        ntv += ptv;
        ntv *= 0.5;
        tv = std::move(ntv);
    } else if (has_fwd) {
        tv = forward(collect_window(extended, t, window, true));
    } else {
        tv = backward(collect_window(extended, t, window, false));
    }
    return compose_with_observations(frame, tv);
}

TrafficFrame temporal_enhance(const TrafficSeries& extended, std::size_t t,
                              const TemporalModelParams& params) {
    const FramePredictorFn fwd = [&](std::span<const Mat> w) {
        return params.forward_predictor.predict(w);
    };
    const FramePredictorFn bwd = [&](std::span<const Mat> w) {
        return params.backward_predictor.predict(w);
    };
    return temporal_enhance_with(extended, t, params.window, fwd, bwd);
}

double temporal_loss(const TemporalModelParams& params, const TrafficSeries& extended,
                     std::vector<double>* grad) {
    const std::size_t T = params.window;
    if (extended.size() < T + 1)
        throw DataError("temporal_loss: series shorter than window + 1");
    if (grad) grad->assign(params.param_count(), 0.0);

    // direction: 0 = forward predictor, 1 = backward predictor.
    auto accumulate = [&](bool forward, std::size_t grad_off) {
        const ArPredictor& ar =
            forward ? params.forward_predictor : params.backward_predictor;
        double dir_total = 0.0;
        std::size_t counted = 0;
        for (std::size_t t = 0; t < extended.size(); ++t) {
            if (forward && t < T) continue;
            if (!forward && t + T >= extended.size()) continue;
            const TrafficFrame& frame = extended.frames[t];
            const std::size_t avail = frame.available_count();
            if (avail == 0) continue;
            const auto window = collect_window(extended, t, T, forward);
            const Mat pred = ar.predict(window);
            const double norm = static_cast<double>(avail * frame.features());
            double frame_loss = 0.0;
            for (std::size_t s = 0; s < frame.sensors(); ++s) {
                if (!frame.available(s)) continue;
                for (std::size_t f = 0; f < frame.features(); ++f) {
                    const double e = pred(s, f) - frame.values(s, f);
                    frame_loss += std::abs(e);
                    if (grad) {
                        const double d = sign_of(e) / norm;
                        for (std::size_t l = 0; l < T; ++l)
                            (*grad)[grad_off + l] += d * window[l](s, f);
                        (*grad)[grad_off + T] += d;
                    }
                }
            }
            dir_total += frame_loss / norm;
            ++counted;
        }
        if (counted == 0) return 0.0;
        if (grad) {
            const double inv = 1.0 / static_cast<double>(counted);
            for (std::size_t i = 0; i <= T; ++i) (*grad)[grad_off + i] *= inv;
        }
        return dir_total / static_cast<double>(counted);
    };

    return accumulate(true, 0) + accumulate(false, T + 1);
}

TrainTrace train_temporal(TemporalModelParams& params, const TrafficSeries& extended,
                          const OptConfig& opt) {
    if (extended.empty()) throw DataError("train_temporal: empty series");
    std::vector<double> packed = params.pack();
    TemporalModelParams scratch = params;
    const LossFn fn = [&](const std::vector<double>& p, std::vector<double>* g) {
        scratch.unpack(p);
        return temporal_loss(scratch, extended, g);
    };
    TrainTrace trace = descend(packed, fn, opt);
    params.unpack(packed);
    return trace;
}

TrafficSeries impute(const TrafficSeries& series, const SpatialModelParams& sv,
                     const TemporalModelParams& tv, const DistanceMatrix& dist,
                     std::size_t subview_budget, std::uint64_t seed) {
    if (series.empty()) throw DataError("impute: empty series");
    const auto features = sensor_features(dist, sv);

    TrafficSeries extended;
    extended.interval_minutes = series.interval_minutes;
    extended.frames.reserve(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const TrafficFrame& frame = series.frames[t];
        if (frame.fully_observed()) {
            extended.frames.push_back(frame);
            continue;
        }
        const TrafficView view = build_subviews(frame, subview_budget, Rng::mix(seed, t));
        extended.frames.push_back(spatial_extend(frame, view, features, sv));
    }

    TrafficSeries out;
    out.interval_minutes = series.interval_minutes;
    out.frames.reserve(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const TrafficFrame& original = series.frames[t];
        TrafficFrame result;
        if (original.fully_observed()) {
            result = original;
        } else {
            const bool has_fwd = t >= tv.window;
            const bool has_bwd = t + tv.window < extended.size();
            // Frames with no temporal context on either side keep the
            // spatially extended values.
            result = (has_fwd || has_bwd) ? temporal_enhance(extended, t, tv)
                                          : extended.frames[t];
        }
        result.imputed.assign(original.sensors(), 0);
        for (std::size_t s = 0; s < original.sensors(); ++s)
            result.imputed[s] = original.available(s) ? 0 : 1;
        std::fill(result.availability.begin(), result.availability.end(), 1);
        out.frames.push_back(std::move(result));
    }
    return out;
}

}  // namespace fedtt
