#include "fedtt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

namespace fedtt {

void RoadNetwork::add_edge(std::size_t src, std::size_t dst, double weight) {
    edges.push_back({src, dst, weight});
    if (src < sensor_count && dst < sensor_count) {
        adjacency(src, dst) = weight;
        adjacency(dst, src) = weight;
    }
}

const RoadNetwork& validate_network(const RoadNetwork& net) {
    if (net.sensor_count == 0) throw NetworkError("network has zero sensors");
    if (net.adjacency.rows() != net.sensor_count || net.adjacency.cols() != net.sensor_count)
        throw NetworkError("adjacency is not square with side sensor_count");
    for (const Edge& e : net.edges) {
        if (e.src >= net.sensor_count || e.dst >= net.sensor_count) {
            std::ostringstream os;
            os << "edge (" << e.src << "," << e.dst << "): index out of range for "
               << net.sensor_count << " sensors";
            throw NetworkError(os.str());
        }
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
            std::ostringstream os;
            os << "edge (" << e.src << "," << e.dst << "): negative weight " << e.weight;
            throw NetworkError(os.str());
        }
        if (net.adjacency(e.src, e.dst) != e.weight || net.adjacency(e.dst, e.src) != e.weight)
            throw NetworkError("adjacency entry disagrees with edge list");
    }
    for (std::size_t i = 0; i < net.adjacency.size(); ++i) {
        const double v = net.adjacency[i];
        if (!std::isfinite(v) || v < 0.0) throw NetworkError("adjacency holds a negative or non-finite weight");
    }
    return net;
}

DistanceMatrix shortest_distance_matrix(const RoadNetwork& net) {
    validate_network(net);
    const std::size_t n = net.sensor_count;
    const double inf = std::numeric_limits<double>::infinity();

    // Adjacency list once; adjacency(i,j) > 0 marks an edge. A zero-weight
    // edge would be indistinguishable from "no edge" in the dense matrix, so
    // pull edges from the edge list as well to honor explicit zero weights.
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (const Edge& e : net.edges) {
        adj[e.src].push_back({e.dst, e.weight});
        adj[e.dst].push_back({e.src, e.weight});
    }

    Mat dist(n, n, inf);
    using Item = std::pair<double, std::size_t>;
    for (std::size_t s = 0; s < n; ++s) {
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        dist(s, s) = 0.0;
        pq.push({0.0, s});
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d > dist(s, u)) continue;
            for (auto [v, w] : adj[u]) {
                const double nd = d + w;
                if (nd < dist(s, v)) {
                    dist(s, v) = nd;
                    pq.push({nd, v});
                }
            }
        }
    }

    double max_finite = 0.0;
    bool any_unreachable = false;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (std::isfinite(dist[i]))
            max_finite = std::max(max_finite, dist[i]);
        else
            any_unreachable = true;
    }

    // Sentinel: max finite distance x 10. An all-isolated graph has max
    // finite 0; use 1 so the sentinel stays strictly positive.
    DistanceMatrix out;
    out.unreachable_sentinel = any_unreachable ? (max_finite > 0.0 ? max_finite * 10.0 : 1.0) : max_finite * 10.0;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (!std::isfinite(dist[i])) dist[i] = out.unreachable_sentinel;
    out.dist = std::move(dist);
    return out;
}

std::vector<double> DistanceMatrix::normalized_row(std::size_t sensor) const {
    const std::size_t n = size();
    double max_entry = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) max_entry = std::max(max_entry, dist[i]);
    if (max_entry <= 0.0) max_entry = 1.0;
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = dist(sensor, j) / max_entry;
    return row;
}

RoadNetwork load_adjacency_csv(const std::string& path, std::size_t sensor_count) {
    std::ifstream in(path);
    if (!in) throw NetworkError("cannot open " + path);
    RoadNetwork net(sensor_count);
    std::string line;
    if (!std::getline(in, line)) throw NetworkError(path + ": empty file");
    if (line != "src,dst,weight") throw NetworkError(path + ": expected header src,dst,weight");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
            std::ostringstream os;
            os << path << ":" << lineno << ": malformed row";
            throw NetworkError(os.str());
        }
        net.add_edge(std::stoul(a), std::stoul(b), std::stod(c));
    }
    return net;
}

void save_adjacency_csv(const RoadNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw NetworkError("cannot write " + path);
    out << "src,dst,weight\n";
    char buf[64];
    for (const Edge& e : net.edges) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.weight);
        out << e.src << ',' << e.dst << ',' << buf << '\n';
    }
}

}  // namespace fedtt
