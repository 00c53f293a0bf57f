#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedtt/mat.hpp"

namespace fedtt {

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    double weight = 0.0;
};

// Weighted sensor graph. Edges are treated as undirected: add_edge inserts
// both directions into the adjacency matrix.
struct RoadNetwork {
    std::size_t sensor_count = 0;
    std::vector<Edge> edges;
    Mat adjacency;  // sensor_count x sensor_count, 0 where no edge

    RoadNetwork() = default;
    explicit RoadNetwork(std::size_t sensors)
        : sensor_count(sensors), adjacency(sensors, sensors) {}

    void add_edge(std::size_t src, std::size_t dst, double weight);
};

// All-pairs shortest distances. Unreachable pairs carry a large finite
// sentinel so downstream feature networks always see finite inputs.
struct DistanceMatrix {
    Mat dist;
    double unreachable_sentinel = 0.0;

    std::size_t size() const { return dist.rows(); }

    // Distance row scaled into [0,1] by the maximum entry; feature-network input.
    std::vector<double> normalized_row(std::size_t sensor) const;
};

struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checks the RoadNetwork invariants and returns the network unchanged.
// Throws NetworkError naming the offending edge otherwise.
const RoadNetwork& validate_network(const RoadNetwork& net);

// Dijkstra from every source over the validated network.
DistanceMatrix shortest_distance_matrix(const RoadNetwork& net);

// CSV ingestion, header "src,dst,weight", one undirected edge per row.
RoadNetwork load_adjacency_csv(const std::string& path, std::size_t sensor_count);
void save_adjacency_csv(const RoadNetwork& net, const std::string& path);

}  // namespace fedtt
