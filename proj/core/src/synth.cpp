#include "fedtt/synth.hpp"

#include <cmath>

#include "fedtt/rng.hpp"

namespace fedtt {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

RoadNetwork random_ring_network(std::size_t sensors, Rng& rng) {
    RoadNetwork net(sensors);
    if (sensors >= 2) {
        for (std::size_t i = 0; i + 1 < sensors; ++i)
            net.add_edge(i, i + 1, rng.uniform(0.5, 1.5));
        if (sensors >= 3) net.add_edge(sensors - 1, 0, rng.uniform(0.5, 1.5));
        const std::size_t chords = sensors / 3;
        for (std::size_t c = 0; c < chords; ++c) {
            const auto a = static_cast<std::size_t>(rng.uniform_index(sensors));
            const auto b = static_cast<std::size_t>(rng.uniform_index(sensors));
            if (a == b || net.adjacency(a, b) != 0.0) continue;
            net.add_edge(a, b, rng.uniform(1.0, 3.0));
        }
    }
    return net;
}

// Smooth per-sensor field: white noise diffused over the row-normalized
// adjacency, then standardized.
std::vector<double> diffused_field(const RoadNetwork& net, Rng& rng) {
    const std::size_t n = net.sensor_count;
    std::vector<double> u(n);
    for (auto& v : u) v = rng.normal();
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double row_sum = 0.0;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double w = net.adjacency(i, j);
                row_sum += w;
                acc += w * u[j];
            }
            next[i] = row_sum > 0.0 ? 0.5 * u[i] + 0.5 * acc / row_sum : u[i];
        }
        u = std::move(next);
    }
    double mean = 0.0;
    for (double v : u) mean += v;
    mean /= n > 0 ? static_cast<double>(n) : 1.0;
    double var = 0.0;
    for (double v : u) var += (v - mean) * (v - mean);
    var /= n > 0 ? static_cast<double>(n) : 1.0;
    const double sd = var > 1e-12 ? std::sqrt(var) : 1.0;
    for (double& v : u) v = (v - mean) / sd;
    return u;
}

struct Latent {
    RoadNetwork network;
    std::vector<Mat> frames;  // latent values per timestep, |M| x F1
};

// Shared latent signal: keyed by (seed, sensor_count) so that cities with
// equal sensor counts see the exact same latent and network.
Latent make_latent(std::size_t sensors, const SynthesisSpec& spec, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x4c41544e54ULL + sensors));
    Latent lat;
    lat.network = random_ring_network(sensors, rng);
    const std::vector<double> field = diffused_field(lat.network, rng);

    struct FeatureWave {
        double period1, phase1, period2, phase2, amp2;
    };
    std::vector<FeatureWave> waves(kDefaultFeatures);
    for (auto& w : waves) {
        w.period1 = rng.uniform(36.0, 96.0);
        w.phase1 = rng.uniform(0.0, kTwoPi);
        w.period2 = rng.uniform(12.0, 30.0);
        w.phase2 = rng.uniform(0.0, kTwoPi);
        w.amp2 = rng.uniform(0.2, 0.5);
    }

    lat.frames.reserve(spec.series_length);
    for (std::size_t t = 0; t < spec.series_length; ++t) {
        Mat m(sensors, kDefaultFeatures);
        for (std::size_t s = 0; s < sensors; ++s) {
            for (std::size_t f = 0; f < kDefaultFeatures; ++f) {
                const FeatureWave& w = waves[f];
                const double phase_shift = 0.6 * field[s];
                const double base =
                    std::sin(kTwoPi * static_cast<double>(t) / w.period1 + w.phase1 + phase_shift) +
                    w.amp2 * std::sin(kTwoPi * static_cast<double>(t) / w.period2 + w.phase2);
                m(s, f) = spec.amplitude * base + spec.spatial_strength * field[s];
            }
        }
        lat.frames.push_back(std::move(m));
    }
    return lat;
}

}  // namespace

std::vector<CityData> synthesize_multi_city(const SynthesisSpec& spec, std::uint64_t seed) {
    if (spec.cities.empty()) throw DataError("synthesize_multi_city: no cities configured");
    if (spec.series_length == 0) throw DataError("synthesize_multi_city: series_length must be positive");
    for (const CitySpec& c : spec.cities)
        if (c.sensors == 0) throw DataError("synthesize_multi_city: city needs at least one sensor");
    if (spec.missing_rate < 0.0 || spec.missing_rate >= 1.0)
        throw DataError("synthesize_multi_city: missing_rate must lie in [0,1)");

    std::vector<CityData> out;
    out.reserve(spec.cities.size());
    for (std::size_t k = 0; k < spec.cities.size(); ++k) {
        const CitySpec& city = spec.cities[k];
        Latent lat = make_latent(city.sensors, spec, seed);
        Rng noise_rng(Rng::mix(seed, 0x4e4f495345ULL + k));
        Rng mask_rng(Rng::mix(seed, 0x4d41534bULL + k));

        CityData cd;
        cd.network = std::move(lat.network);
        cd.series.interval_minutes = spec.interval_minutes;
        cd.series.frames.reserve(spec.series_length);
        for (std::size_t t = 0; t < spec.series_length; ++t) {
            TrafficFrame frame(city.sensors, kDefaultFeatures);
            for (std::size_t s = 0; s < city.sensors; ++s)
                for (std::size_t f = 0; f < kDefaultFeatures; ++f)
                    frame.values(s, f) = city.feature_scale[f] * lat.frames[t](s, f) +
                                         city.feature_offset[f] +
                                         spec.noise_level * noise_rng.normal();
            if (spec.missing_rate > 0.0) {
                for (std::size_t s = 0; s < city.sensors; ++s)
                    frame.availability[s] = mask_rng.uniform01() < spec.missing_rate ? 0 : 1;
                if (frame.available_count() == 0)
                    frame.availability[mask_rng.uniform_index(city.sensors)] = 1;
            }
            cd.series.frames.push_back(std::move(frame));
        }
        out.push_back(std::move(cd));
    }
    return out;
}

}  // namespace fedtt
