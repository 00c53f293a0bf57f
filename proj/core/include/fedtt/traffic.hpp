#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedtt/mat.hpp"

namespace fedtt {

inline constexpr std::size_t kDefaultFeatures = 3;  // flow, speed, occupancy
inline constexpr const char* kFeatureNames[kDefaultFeatures] = {"flow", "speed", "occ"};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One timestep: sensor x feature readings plus the availability mask. Rows
// with availability=false are never treated as ground truth by any loss.
// `imputed` is empty until an imputation pass fills it in.
struct TrafficFrame {
    Mat values;                        // |M| x F1
    std::vector<std::uint8_t> availability;  // length |M|
    std::vector<std::uint8_t> imputed;       // empty, or length |M|

    TrafficFrame() = default;
    TrafficFrame(std::size_t sensors, std::size_t features)
        : values(sensors, features), availability(sensors, 1) {}

    std::size_t sensors() const { return values.rows(); }
    std::size_t features() const { return values.cols(); }
    bool available(std::size_t s) const { return availability[s] != 0; }
    std::size_t available_count() const {
        std::size_t n = 0;
        for (auto a : availability) n += a != 0;
        return n;
    }
    bool fully_observed() const { return available_count() == sensors(); }
};

struct TrafficSeries {
    std::vector<TrafficFrame> frames;
    double interval_minutes = 5.0;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    std::size_t sensors() const { return frames.empty() ? 0 : frames.front().sensors(); }
    std::size_t features() const { return frames.empty() ? 0 : frames.front().features(); }

    bool fully_observed() const {
        for (const auto& f : frames)
            if (!f.fully_observed()) return false;
        return true;
    }

    TrafficSeries slice(std::size_t begin, std::size_t count) const;
};

struct PredictionWindow {
    std::vector<TrafficFrame> input;   // T frames
    std::vector<TrafficFrame> target;  // T' frames immediately following
};

// Sliding windows: floor((len - T - T') / stride) + 1 of them.
std::vector<PredictionWindow> make_windows(const TrafficSeries& series, std::size_t t_in,
                                           std::size_t t_out, std::size_t stride = 1);

// Masked metrics. Only entries whose truth row is available contribute;
// zero available entries is an error, not a zero.
double mae(const std::vector<TrafficFrame>& pred, const std::vector<TrafficFrame>& truth);
double rmse(const std::vector<TrafficFrame>& pred, const std::vector<TrafficFrame>& truth);
double mae(const TrafficFrame& pred, const TrafficFrame& truth);
double rmse(const TrafficFrame& pred, const TrafficFrame& truth);

// Per-feature-column variants (flow/speed/occ reporting).
std::vector<double> mae_per_feature(const std::vector<TrafficFrame>& pred,
                                    const std::vector<TrafficFrame>& truth);
std::vector<double> rmse_per_feature(const std::vector<TrafficFrame>& pred,
                                     const std::vector<TrafficFrame>& truth);

// Contiguous train/validation/test split by explicit fractions. The
// remainder past the three fractions is left unused on purpose.
struct SeriesSplit {
    TrafficSeries train, validation, test;
};
SeriesSplit split_series(const TrafficSeries& series, double train_frac, double val_frac,
                         double test_frac);

// readings.csv: header "t,sensor,flow,speed,occ,available". Missing rows
// imply available=0. Writers may append an "imputed" column; the reader
// accepts both layouts.
TrafficSeries load_readings_csv(const std::string& path, std::size_t sensor_count,
                                double interval_minutes = 5.0);
void save_readings_csv(const TrafficSeries& series, const std::string& path,
                       bool with_imputed_column = false);

}  // namespace fedtt
