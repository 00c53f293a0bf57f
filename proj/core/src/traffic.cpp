#include "fedtt/traffic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fedtt {

TrafficSeries TrafficSeries::slice(std::size_t begin, std::size_t count) const {
    TrafficSeries out;
    out.interval_minutes = interval_minutes;
    if (begin > frames.size()) return out;
    const std::size_t end = std::min(frames.size(), begin + count);
    out.frames.assign(frames.begin() + begin, frames.begin() + end);
    return out;
}

std::vector<PredictionWindow> make_windows(const TrafficSeries& series, std::size_t t_in,
                                           std::size_t t_out, std::size_t stride) {
    if (t_in == 0 || t_out == 0 || stride == 0)
        throw DataError("make_windows: T, T' and stride must be positive");
    const std::size_t need = t_in + t_out;
    if (series.size() < need) {
        std::ostringstream os;
        os << "make_windows: series has " << series.size() << " frames, needs at least " << need;
        throw DataError(os.str());
    }
    const std::size_t count = (series.size() - need) / stride + 1;
    std::vector<PredictionWindow> out;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * stride;
        PredictionWindow pw;
        pw.input.assign(series.frames.begin() + start, series.frames.begin() + start + t_in);
        pw.target.assign(series.frames.begin() + start + t_in,
                         series.frames.begin() + start + need);
        out.push_back(std::move(pw));
    }
    return out;
}

namespace {

struct MetricAccum {
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    std::size_t count = 0;

    void add(const TrafficFrame& pred, const TrafficFrame& truth) {
        if (!pred.values.same_shape(truth.values))
            throw DataError("metric: prediction and truth shapes differ");
        for (std::size_t s = 0; s < truth.sensors(); ++s) {
            if (!truth.available(s)) continue;
            for (std::size_t f = 0; f < truth.features(); ++f) {
                const double e = pred.values(s, f) - truth.values(s, f);
                abs_sum += std::abs(e);
                sq_sum += e * e;
                ++count;
            }
        }
    }

    void require_nonempty() const {
        if (count == 0) throw DataError("metric undefined: zero available entries");
    }
};

}  // namespace

double mae(const TrafficFrame& pred, const TrafficFrame& truth) {
    MetricAccum a;
    a.add(pred, truth);
    a.require_nonempty();
    return a.abs_sum / static_cast<double>(a.count);
}

double rmse(const TrafficFrame& pred, const TrafficFrame& truth) {
    MetricAccum a;
    a.add(pred, truth);
    a.require_nonempty();
    return std::sqrt(a.sq_sum / static_cast<double>(a.count));
}

double mae(const std::vector<TrafficFrame>& pred, const std::vector<TrafficFrame>& truth) {
    if (pred.size() != truth.size()) throw DataError("metric: frame counts differ");
    MetricAccum a;
    for (std::size_t i = 0; i < pred.size(); ++i) a.add(pred[i], truth[i]);
    a.require_nonempty();
    return a.abs_sum / static_cast<double>(a.count);
}

double rmse(const std::vector<TrafficFrame>& pred, const std::vector<TrafficFrame>& truth) {
    if (pred.size() != truth.size()) throw DataError("metric: frame counts differ");
    MetricAccum a;
    for (std::size_t i = 0; i < pred.size(); ++i) a.add(pred[i], truth[i]);
    a.require_nonempty();
    return std::sqrt(a.sq_sum / static_cast<double>(a.count));
}

namespace {

std::vector<MetricAccum> per_feature_accum(const std::vector<TrafficFrame>& pred,
                                           const std::vector<TrafficFrame>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw DataError("metric: frame counts differ or empty");
    const std::size_t nf = truth.front().features();
    std::vector<MetricAccum> acc(nf);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred[i].values.same_shape(truth[i].values))
            throw DataError("metric: prediction and truth shapes differ");
        for (std::size_t s = 0; s < truth[i].sensors(); ++s) {
            if (!truth[i].available(s)) continue;
            for (std::size_t f = 0; f < nf; ++f) {
                const double e = pred[i].values(s, f) - truth[i].values(s, f);
                acc[f].abs_sum += std::abs(e);
                acc[f].sq_sum += e * e;
                ++acc[f].count;
            }
        }
    }
    for (const auto& a : acc) a.require_nonempty();
    return acc;
}

}  // namespace

std::vector<double> mae_per_feature(const std::vector<TrafficFrame>& pred,
                                    const std::vector<TrafficFrame>& truth) {
    auto acc = per_feature_accum(pred, truth);
    std::vector<double> out;
    for (const auto& a : acc) out.push_back(a.abs_sum / static_cast<double>(a.count));
    return out;
}

std::vector<double> rmse_per_feature(const std::vector<TrafficFrame>& pred,
                                     const std::vector<TrafficFrame>& truth) {
    auto acc = per_feature_accum(pred, truth);
    std::vector<double> out;
    for (const auto& a : acc) out.push_back(std::sqrt(a.sq_sum / static_cast<double>(a.count)));
    return out;
}

SeriesSplit split_series(const TrafficSeries& series, double train_frac, double val_frac,
                         double test_frac) {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 || train_frac + val_frac + test_frac > 1.0)
        throw DataError("split_series: fractions must be non-negative and sum to at most 1");
    const auto n = static_cast<double>(series.size());
    const auto n_train = static_cast<std::size_t>(n * train_frac);
    const auto n_val = static_cast<std::size_t>(n * val_frac);
    const auto n_test = static_cast<std::size_t>(n * test_frac);
    SeriesSplit s;
    s.train = series.slice(0, n_train);
    s.validation = series.slice(n_train, n_val);
    s.test = series.slice(n_train + n_val, n_test);
    return s;
}

TrafficSeries load_readings_csv(const std::string& path, std::size_t sensor_count,
                                double interval_minutes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    bool has_imputed = false;
    if (line == "t,sensor,flow,speed,occ,available") {
        has_imputed = false;
    } else if (line == "t,sensor,flow,speed,occ,available,imputed") {
        has_imputed = true;
    } else {
        throw DataError(path + ": unexpected header: " + line);
    }

    struct Row {
        std::size_t t, sensor;
        double v[kDefaultFeatures];
        bool available;
        bool imputed;
    };
    std::vector<Row> rows;
    std::size_t max_t = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        Row r{};
        auto next = [&](const char* what) {
            if (!std::getline(ls, tok, ',')) {
                std::ostringstream os;
                os << path << ":" << lineno << ": missing field " << what;
                throw DataError(os.str());
            }
            return tok;
        };
        r.t = std::stoul(next("t"));
        r.sensor = std::stoul(next("sensor"));
        for (std::size_t f = 0; f < kDefaultFeatures; ++f) r.v[f] = std::stod(next("value"));
        r.available = std::stoi(next("available")) != 0;
        r.imputed = has_imputed && std::stoi(next("imputed")) != 0;
        if (r.sensor >= sensor_count) {
            std::ostringstream os;
            os << path << ":" << lineno << ": sensor index " << r.sensor << " out of range";
            throw DataError(os.str());
        }
        max_t = std::max(max_t, r.t);
        rows.push_back(r);
    }

    TrafficSeries series;
    series.interval_minutes = interval_minutes;
    series.frames.assign(max_t + 1, TrafficFrame(sensor_count, kDefaultFeatures));
    for (auto& f : series.frames) std::fill(f.availability.begin(), f.availability.end(), 0);
    if (has_imputed)
        for (auto& f : series.frames) f.imputed.assign(sensor_count, 0);
    for (const Row& r : rows) {
        TrafficFrame& fr = series.frames[r.t];
        for (std::size_t f = 0; f < kDefaultFeatures; ++f) fr.values(r.sensor, f) = r.v[f];
        fr.availability[r.sensor] = r.available ? 1 : 0;
        if (has_imputed) fr.imputed[r.sensor] = r.imputed ? 1 : 0;
    }
    return series;
}

void save_readings_csv(const TrafficSeries& series, const std::string& path,
                       bool with_imputed_column) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "t,sensor,flow,speed,occ,available";
    if (with_imputed_column) out << ",imputed";
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < series.size(); ++t) {
        const TrafficFrame& fr = series.frames[t];
        for (std::size_t s = 0; s < fr.sensors(); ++s) {
            out << t << ',' << s;
            for (std::size_t f = 0; f < fr.features(); ++f) {
                std::snprintf(buf, sizeof(buf), "%.17g", fr.values(s, f));
                out << ',' << buf;
            }
            out << ',' << (fr.available(s) ? 1 : 0);
            if (with_imputed_column)
                out << ',' << (!fr.imputed.empty() && fr.imputed[s] ? 1 : 0);
            out << '\n';
        }
    }
}

}  // namespace fedtt
