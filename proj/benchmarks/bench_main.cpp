#include <benchmark/benchmark.h>

#include "fedtt/graph.hpp"
#include "fedtt/rng.hpp"
#include "fedtt/tda.hpp"
#include "fedtt/tst.hpp"
#include "fedtt/tvi.hpp"

namespace {

using namespace fedtt;

RoadNetwork make_network(std::size_t sensors, std::uint64_t seed) {
    Rng rng(seed);
    RoadNetwork net(sensors);
    for (std::size_t i = 0; i + 1 < sensors; ++i) net.add_edge(i, i + 1, rng.uniform(0.5, 2.0));
    for (std::size_t e = 0; e < sensors; ++e) {
        const std::size_t a = rng.uniform_index(sensors);
        const std::size_t b = rng.uniform_index(sensors);
        if (a != b && net.adjacency(a, b) == 0.0) net.add_edge(a, b, rng.uniform(0.5, 3.0));
    }
    return net;
}

Mat random_frame(std::size_t rows, std::size_t cols, Rng& rng) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-5.0, 5.0);
    return m;
}

void BM_ShortestDistances(benchmark::State& state) {
    const RoadNetwork net = make_network(static_cast<std::size_t>(state.range(0)), 7);
    for (auto _ : state) benchmark::DoNotOptimize(shortest_distance_matrix(net));
}
BENCHMARK(BM_ShortestDistances)->Arg(16)->Arg(64)->Arg(128);

void BM_EncryptFrame(benchmark::State& state) {
    Rng rng(11);
    const CipherBox box{rng.next_u64(), 3};
    const Mat x = random_frame(static_cast<std::size_t>(state.range(0)), 3, rng);
    for (auto _ : state) benchmark::DoNotOptimize(encrypt_frame(x, box, 1, 4, 0));
}
BENCHMARK(BM_EncryptFrame)->Arg(8)->Arg(64)->Arg(256);

void BM_CombineAndOpen(benchmark::State& state) {
    Rng rng(13);
    const std::size_t n = 3;
    const CipherBox box{rng.next_u64(), n};
    std::vector<Ciphertext> cts;
    for (std::size_t i = 0; i < n; ++i)
        cts.push_back(encrypt_frame(random_frame(static_cast<std::size_t>(state.range(0)), 3, rng),
                                    box, i, 2, 0));
    for (auto _ : state)
        benchmark::DoNotOptimize(open_aggregate_sum(combine_ciphertexts(cts), n));
}
BENCHMARK(BM_CombineAndOpen)->Arg(8)->Arg(64)->Arg(256);

void BM_MaskingRound(benchmark::State& state) {
    Rng rng(17);
    const std::size_t n = 3;
    const std::size_t sensors = static_cast<std::size_t>(state.range(0));
    const AggregateFrame prev{3, random_frame(sensors, 3, rng)};
    std::vector<Mat> now, before;
    for (std::size_t i = 0; i < n; ++i) {
        now.push_back(random_frame(sensors, 3, rng));
        before.push_back(random_frame(sensors, 3, rng));
    }
    for (auto _ : state) {
        std::vector<MaskFrame> masks;
        for (std::size_t i = 0; i < n; ++i)
            masks.push_back(mask_frame(prev, now[i], before[i], n, 4,
                                       static_cast<std::uint32_t>(i)));
        benchmark::DoNotOptimize(unmask_aggregate(std::move(masks), prev, n));
    }
}
BENCHMARK(BM_MaskingRound)->Arg(8)->Arg(64)->Arg(256);

void BM_GeneratorForward(benchmark::State& state) {
    Rng rng(19);
    const std::size_t hidden = static_cast<std::size_t>(state.range(0));
    GeneratorParams gen = GeneratorParams::make(8, 8, 3, hidden, rng);
    TransformBundle tb;
    tb.a_net = random_frame(8, 8, rng);
    tb.a_proto = random_frame(8, 8, rng);
    const Mat x = random_frame(8, 3, rng);
    for (auto _ : state) benchmark::DoNotOptimize(generate(x, gen, tb));
}
BENCHMARK(BM_GeneratorForward)->Arg(32)->Arg(256)->Arg(1024);

void BM_SpatialExtend(benchmark::State& state) {
    Rng rng(23);
    const std::size_t sensors = 8;
    TviConfig cfg;
    cfg.heads = 2;
    cfg.head_dim = 8;
    const RoadNetwork net = make_network(sensors, 5);
    const DistanceMatrix dist = shortest_distance_matrix(net);
    SpatialModelParams params = SpatialModelParams::make(sensors, 3, cfg, rng);
    const auto features = sensor_features(dist, params);
    TrafficFrame frame(sensors, 3);
    frame.values = random_frame(sensors, 3, rng);
    frame.availability[2] = 0;
    const TrafficView view =
        build_subviews(frame, static_cast<std::size_t>(state.range(0)), 9);
    for (auto _ : state)
        benchmark::DoNotOptimize(spatial_extend(frame, view, features, params));
}
BENCHMARK(BM_SpatialExtend)->Arg(4)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
