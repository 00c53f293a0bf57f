#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fedtt/graph.hpp"
#include "fedtt/traffic.hpp"

namespace fedtt {

// Per-city affine domain shift: value = scale[f] * latent + offset[f] + noise.
struct CitySpec {
    std::size_t sensors = 8;
    std::array<double, kDefaultFeatures> feature_scale{1.0, 1.0, 1.0};
    std::array<double, kDefaultFeatures> feature_offset{0.0, 0.0, 0.0};
};

struct SynthesisSpec {
    std::vector<CitySpec> cities;
    std::size_t series_length = 288;
    double noise_level = 0.05;
    double missing_rate = 0.0;
    double interval_minutes = 5.0;
    double amplitude = 1.0;          // temporal sinusoid amplitude
    double spatial_strength = 0.35;  // weight of the graph-diffused per-sensor field
};

struct CityData {
    RoadNetwork network;
    TrafficSeries series;
};

// Deterministic for a fixed seed. Cities with equal sensor counts share the
// same latent signal and road network; only the affine map, the noise draw
// and the availability mask are city-specific. Every frame keeps at least
// one available sensor.
std::vector<CityData> synthesize_multi_city(const SynthesisSpec& spec, std::uint64_t seed);

}  // namespace fedtt
