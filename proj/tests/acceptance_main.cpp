// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs the protocol, privacy, gradient, recovery, imputation,
// adaptation, transfer, degeneracy, shortest-path and determinism gates at
// their stated tolerances.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "fedtt/checkpoint.hpp"
#include "fedtt/commands.hpp"
#include "fedtt/fpt.hpp"
#include "fedtt/graph.hpp"
#include "fedtt/report.hpp"
#include "fedtt/rng.hpp"
#include "fedtt/synth.hpp"
#include "fedtt/tda.hpp"
#include "fedtt/tst.hpp"
#include "fedtt/tvi.hpp"

namespace fs = std::filesystem;
using namespace fedtt;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng, double lo = -5.0, double hi = 5.0) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
    return m;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- criterion 1
void protocol_correctness() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (std::size_t n : {1u, 2u, 3u, 5u}) {
        std::vector<std::vector<Mat>> frames(n);
        for (auto& seq : frames)
            for (int r = 0; r <= 10; ++r) seq.push_back(random_mat(8, 3, rng));
        const ProtocolRun run = run_masking_protocol(frames, rng.next_u64());
        for (std::size_t r = 1; r <= 10; ++r) {
            Mat want(8, 3);
            for (const auto& seq : frames) want += seq[r];
            want *= 1.0 / static_cast<double>(n);
            const Mat& got = run.aggregates[r - 1].values;
            for (std::size_t i = 0; i < want.size(); ++i) {
                const double rel =
                    std::abs(got[i] - want[i]) / std::max(std::abs(want[i]), 1.0);
                worst = std::max(worst, rel);
            }
        }
    }
    const double secs = seconds_since(start);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max rel err %.2e (tol 1e-9), %.2fs (budget 5s)", worst,
                  secs);
    report("protocol-correctness", worst <= 1e-9 && secs < 5.0, buf);
}

// ---------------------------------------------------------------- criterion 2
void privacy_offset_invariance() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(1002);
    const std::size_t n = 3, rounds = 6;
    std::vector<std::vector<Mat>> base(n);
    for (auto& seq : base)
        for (std::size_t r = 0; r <= rounds; ++r) seq.push_back(random_mat(4, 3, rng));

    // Offsets live on the cipher's fixed-point grid so the zero-sum
    // cancellation survives quantization exactly.
    std::vector<Mat> offsets(3, Mat(4, 3));
    for (int k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < offsets[k].size(); ++i)
            offsets[k][i] = static_cast<double>(static_cast<std::int64_t>(
                                rng.uniform_index(2 * (1 << 20))) - (1 << 20)) /
                            kFixedPointScale;
    for (std::size_t i = 0; i < offsets[2].size(); ++i)
        offsets[2][i] = -(offsets[0][i] + offsets[1][i]);

    auto zero_sum = base;
    for (std::size_t i = 0; i < n; ++i)
        for (auto& f : zero_sum[i]) f += offsets[i];
    auto skew = base;
    for (auto& f : skew[0]) f += offsets[0];

    const auto va = server_view(run_masking_protocol(base, 9).transcript);
    const auto vb = server_view(run_masking_protocol(zero_sum, 9).transcript);
    const auto vc = server_view(run_masking_protocol(skew, 9).transcript);

    double same_gap = 0.0;
    bool shapes_ok = va.size() == vb.size() && va.size() == vc.size();
    for (std::size_t k = 0; shapes_ok && k < va.size(); ++k)
        for (std::size_t i = 0; i < va[k].values.size(); ++i)
            same_gap = std::max(same_gap, std::abs(va[k].values[i] - vb[k].values[i]));
    double skew_gap = 0.0;
    for (std::size_t k = 0; shapes_ok && k < va.size(); ++k)
        for (std::size_t i = 0; i < va[k].values.size(); ++i)
            skew_gap = std::max(skew_gap, std::abs(va[k].values[i] - vc[k].values[i]));

    const double secs = seconds_since(start);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "zero-sum view gap %.2e (tol 1e-12), non-zero-sum gap %.2e (>0), %.2fs",
                  same_gap, skew_gap, secs);
    report("privacy-offset-invariance",
           shapes_ok && same_gap <= 1e-12 && skew_gap > 1e-6 && secs < 10.0, buf);
}

// ---------------------------------------------------------------- criterion 3
void homomorphic_bootstrap() {
    Rng rng(1003);
    bool sums_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(4);
        const CipherBox box{rng.next_u64(), n};
        Mat want(2, 2);
        std::vector<Ciphertext> cts;
        for (std::size_t i = 0; i < n; ++i) {
            const Mat x = random_mat(2, 2, rng, -20.0, 20.0);
            want += x;
            cts.push_back(encrypt_frame(x, box, i, 3, 1));
        }
        const Mat sum = open_aggregate_sum(combine_ciphertexts(cts), n);
        const double bound = static_cast<double>(n) / kFixedPointScale;
        for (std::size_t i = 0; i < sum.size(); ++i)
            if (std::abs(sum[i] - want[i]) > bound) sums_ok = false;
    }

    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const CipherBox box{rng.next_u64(), 2};
        const CipherBox intruder{rng.next_u64(), 2};
        const Ciphertext ct = encrypt_frame(random_mat(2, 2, rng), box, 0, 1, 0);
        try {
            (void)decrypt_frame(ct, intruder);
        } catch (const CryptoError&) {
            ++failures;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "1000 sums within 2^-20*n: %s; wrong-key failures %d/100",
                  sums_ok ? "yes" : "no", failures);
    report("homomorphic-bootstrap", sums_ok && failures == 100, buf);
}

// ---------------------------------------------------------------- criterion 4
struct FdResult {
    double max_rel = 0.0;
};

FdResult fd_probe(const LossFn& fn, std::vector<double> params, std::size_t probes,
                  std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> grad(params.size());
    fn(params, &grad);
    FdResult res;
    const double h = 1e-5;
    for (std::size_t p = 0; p < probes; ++p) {
        const std::size_t i = rng.uniform_index(params.size());
        const double keep = params[i];
        params[i] = keep + h;
        const double up = fn(params, nullptr);
        params[i] = keep - h;
        const double dn = fn(params, nullptr);
        params[i] = keep;
        const double fd = (up - dn) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
        res.max_rel = std::max(res.max_rel, std::abs(fd - grad[i]) / denom);
    }
    return res;
}

void gradient_suite() {
    Rng rng(1004);
    double worst = 0.0;
    std::string worst_name = "none";
    auto track = [&](const char* name, double rel) {
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
    };

    {  // generator with both discriminators live
        GeneratorParams gen = GeneratorParams::make(4, 3, 3, 6, rng);
        TransformBundle tb;
        tb.a_net = random_mat(3, 4, rng, -0.5, 0.5);
        tb.a_proto = random_mat(3, 4, rng, -0.5, 0.5);
        Prototype proto{random_mat(3, 3, rng, -1, 1)};
        DiscriminatorParams ds = DiscriminatorParams::make(3, 3, 6, rng);
        DiscriminatorParams dc = DiscriminatorParams::make(3, 3, 6, rng);
        GeneratorBatch batch;
        batch.raw = {random_mat(4, 3, rng, -1, 1), random_mat(4, 3, rng, -1, 1)};
        batch.align_target = &proto;
        batch.disc_server = &ds;
        batch.disc_client = &dc;
        batch.server_counterpart = {random_mat(3, 3, rng, -1, 1)};
        batch.client_counterpart = {random_mat(3, 3, rng, -1, 1)};
        GeneratorParams scratch = gen;
        const LossFn fn = [&](const std::vector<double>& p, std::vector<double>* g) {
            scratch.unpack(p);
            if (g) {
                std::vector<double> grad;
                const auto parts = generator_loss(scratch, tb, batch, &grad);
                *g = grad;
                return parts.total;
            }
            return generator_loss(scratch, tb, batch, nullptr).total;
        };
        track("generator", fd_probe(fn, gen.pack(), 24, 21).max_rel);
    }
    {  // both discriminators
        for (int which = 0; which < 2; ++which) {
            DiscriminatorParams d = DiscriminatorParams::make(3, 2, 5, rng);
            std::vector<LabeledFrame> batch;
            for (int i = 0; i < 6; ++i) batch.push_back({random_mat(3, 2, rng, -1, 1), i % 2});
            DiscriminatorParams scratch = d;
            const LossFn fn = [&](const std::vector<double>& p, std::vector<double>* g) {
                scratch.net.params = p;
                return discriminator_loss_grad(scratch, batch, g);
            };
            track(which ? "client-disc" : "server-disc",
                  fd_probe(fn, d.net.params, 22, 31 + which).max_rel);
        }
    }
    {  // TVI spatial trainer
        TviConfig cfg;
        cfg.heads = 2;
        cfg.head_dim = 2;
        cfg.feature_hidden = 3;
        RoadNetwork net(3);
        net.add_edge(0, 1, 1.0);
        net.add_edge(1, 2, 1.5);
        const DistanceMatrix dist = shortest_distance_matrix(net);
        SpatialModelParams p = SpatialModelParams::make(3, 2, cfg, rng);
        TrafficSeries series;
        for (int t = 0; t < 4; ++t) {
            TrafficFrame f(3, 2);
            for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = rng.uniform(-1, 1);
            if (t == 2) f.availability[1] = 0;
            series.frames.push_back(f);
        }
        std::vector<TrafficView> views;
        for (std::size_t t = 0; t < series.size(); ++t)
            views.push_back(build_subviews(series.frames[t], 4, Rng::mix(3, t)));
        SpatialModelParams scratch = p;
        const LossFn fn = [&](const std::vector<double>& params, std::vector<double>* g) {
            scratch.unpack(params);
            return spatial_loss(scratch, series, views, dist, g);
        };
        track("tvi-spatial", fd_probe(fn, p.pack(), 24, 41).max_rel);
    }
    {  // TVI temporal trainer
        TrafficSeries series;
        for (int t = 0; t < 12; ++t) {
            TrafficFrame f(2, 2);
            for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = rng.uniform(-1, 1);
            series.frames.push_back(f);
        }
        TemporalModelParams tv = TemporalModelParams::make(3);
        for (auto& w : tv.forward_predictor.weights) w = rng.uniform(-0.4, 0.4);
        for (auto& w : tv.backward_predictor.weights) w = rng.uniform(-0.4, 0.4);
        TemporalModelParams scratch = tv;
        const LossFn fn = [&](const std::vector<double>& params, std::vector<double>* g) {
            scratch.unpack(params);
            return temporal_loss(scratch, series, g);
        };
        track("tvi-temporal", fd_probe(fn, tv.pack(), 20, 51).max_rel);
    }
    {  // transform fits
        Mat adj_src = random_mat(5, 5, rng, 0, 1);
        const Mat adj_dst = random_mat(4, 4, rng, 0, 1);
        const Mat a0 = random_mat(4, 5, rng, -0.5, 0.5);
        const LossFn net_fn = [&](const std::vector<double>& p, std::vector<double>* g) {
            Mat a(4, 5);
            for (std::size_t i = 0; i < p.size(); ++i) a[i] = p[i];
            return network_transform_loss(a, adj_src, adj_dst, g);
        };
        track("net-transform", fd_probe(net_fn, a0.storage(), 20, 61).max_rel);

        const Mat psrc = random_mat(5, 3, rng, -1, 1);
        const Mat pdst = random_mat(4, 3, rng, -1, 1);
        const LossFn proto_fn = [&](const std::vector<double>& p, std::vector<double>* g) {
            Mat a(4, 5);
            for (std::size_t i = 0; i < p.size(); ++i) a[i] = p[i];
            return prototype_transform_loss(a, psrc, pdst, g);
        };
        track("proto-transform", fd_probe(proto_fn, a0.storage(), 20, 71).max_rel);
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max rel err %.2e (tol 1e-4), worst: %s", worst,
                  worst_name.c_str());
    report("gradient-suite", worst < 1e-4, buf);
}

// ---------------------------------------------------------------- criterion 5
void planted_transform_recovery() {
    Rng rng(1005);
    bool ok = true;
    std::ostringstream detail;

    {  // network transform up to 12x8
        Mat adj_src = random_mat(8, 8, rng, 0.0, 1.0);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < i; ++j) adj_src(j, i) = adj_src(i, j);
        const Mat planted = random_mat(12, 8, rng, -0.6, 0.6);
        const Mat adj_dst = matmul(matmul(planted, adj_src), transpose(planted));
        TransformFitConfig cfg;
        cfg.opt.epochs = 2000;
        cfg.opt.step = 0.03;
        cfg.seed = 17;
        const TransformFit fit = fit_network_transform(adj_src, adj_dst, cfg);
        const double rel = fit.residual / std::max(adj_dst.frobenius(), 1e-12);
        detail << "net 12x8 rel " << rel;
        ok = ok && rel < 1e-4;
    }
    {  // prototype transform 12x8
        const Mat psrc = random_mat(8, 3, rng, -1.0, 1.0);
        const Mat planted = random_mat(12, 8, rng, -0.8, 0.8);
        const Mat pdst = matmul(planted, psrc);
        TransformFitConfig cfg;
        cfg.opt.epochs = 2000;
        cfg.opt.step = 0.05;
        cfg.seed = 19;
        const TransformFit fit = fit_prototype_transform({psrc}, {pdst}, cfg);
        const double rel = fit.residual / std::max(pdst.frobenius(), 1e-12);
        detail << ", proto 12x8 rel " << rel;
        ok = ok && rel < 1e-4;
    }
    report("planted-transform-recovery", ok, detail.str() + " (tol 1e-4, 2000 steps)");
}

// ---------------------------------------------------------------- criterion 6
void imputation_benefit() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> ratios;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthesisSpec spec;
        spec.cities = {CitySpec{8, {1, 1, 1}, {0, 0, 0}}};
        spec.series_length = 120;
        spec.noise_level = 0.02;
        spec.missing_rate = 0.2;
        spec.amplitude = 1.0;
        const CityData city = std::move(synthesize_multi_city(spec, seed)[0]);

        // Ground truth for the same seed: identical latent with no mask.
        SynthesisSpec full_spec = spec;
        full_spec.missing_rate = 0.0;
        const CityData truth = std::move(synthesize_multi_city(full_spec, seed)[0]);

        const DistanceMatrix dist = shortest_distance_matrix(city.network);
        TviConfig tvi_cfg;
        tvi_cfg.heads = 2;
        tvi_cfg.head_dim = 8;
        tvi_cfg.feature_hidden = 12;
        tvi_cfg.subview_budget = 6;
        tvi_cfg.temporal_window = 8;
        Rng rng(Rng::mix(seed, 900));
        SpatialModelParams sv = SpatialModelParams::make(8, 3, tvi_cfg, rng);
        TemporalModelParams tv = TemporalModelParams::make(tvi_cfg.temporal_window);

        OptConfig sopt;
        sopt.epochs = 100;
        sopt.step = 0.05;
        train_spatial(sv, city.series, dist, sopt, tvi_cfg.subview_budget, seed);

        const auto features = sensor_features(dist, sv);
        TrafficSeries extended = city.series;
        for (std::size_t t = 0; t < extended.size(); ++t) {
            if (city.series.frames[t].fully_observed()) continue;
            const TrafficView view =
                build_subviews(city.series.frames[t], tvi_cfg.subview_budget, Rng::mix(seed, t));
            extended.frames[t] = spatial_extend(city.series.frames[t], view, features, sv);
        }
        OptConfig topt;
        topt.epochs = 500;
        topt.step = 0.1;
        train_temporal(tv, extended, topt);

        const TrafficSeries filled =
            impute(city.series, sv, tv, dist, tvi_cfg.subview_budget, seed);

        // Mean-fill baseline oracle: per-sensor mean of its observed values.
        Mat sums(8, 3);
        std::vector<std::size_t> counts(8, 0);
        for (const TrafficFrame& f : city.series.frames)
            for (std::size_t s = 0; s < 8; ++s) {
                if (!f.available(s)) continue;
                ++counts[s];
                for (std::size_t c = 0; c < 3; ++c) sums(s, c) += f.values(s, c);
            }

        double tvi_err = 0.0, base_err = 0.0;
        std::size_t hidden = 0;
        for (std::size_t t = 0; t < city.series.size(); ++t)
            for (std::size_t s = 0; s < 8; ++s) {
                if (city.series.frames[t].available(s)) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    const double want = truth.series.frames[t].values(s, c);
                    tvi_err += std::abs(filled.frames[t].values(s, c) - want);
                    const double mean_fill =
                        counts[s] ? sums(s, c) / static_cast<double>(counts[s]) : 0.0;
                    base_err += std::abs(mean_fill - want);
                    ++hidden;
                }
            }
        ratios.push_back(tvi_err / std::max(base_err, 1e-12));
    }
    const double med = median(ratios);
    const double secs = seconds_since(start);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "median TVI/mean-fill MAE ratio %.3f (tol < 0.5), %.1fs",
                  med, secs);
    report("imputation-benefit", med < 0.5 && secs < 60.0, buf);
}

// ---------------------------------------------------------------- criterion 7
void domain_adaptation_benefit() {
    std::vector<double> align_drops, accuracies;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthesisSpec spec;
        spec.cities = {CitySpec{6, {1.6, 0.7, 1.3}, {0.8, -0.5, 0.3}},
                       CitySpec{6, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}};
        spec.series_length = 260;
        spec.noise_level = 0.08;
        spec.amplitude = 0.8;
        auto cities = synthesize_multi_city(spec, seed);
        const CityData& source = cities[0];
        const CityData& target = cities[1];

        const std::size_t train_len = 200;
        TrafficSeries target_train = target.series.slice(0, train_len);
        TrafficSeries target_held = target.series.slice(train_len, 60);
        TrafficSeries source_train = source.series.slice(0, train_len);
        TrafficSeries source_held = source.series.slice(train_len, 60);

        const Prototype proto_t = compute_prototype(target_train);
        const Prototype proto_s = compute_prototype(source_train);

        TransformFitConfig tf;
        tf.opt.epochs = 400;
        tf.seed = Rng::mix(seed, 10);
        TransformBundle tb;
        tb.a_net = fit_network_transform(source.network.adjacency, target.network.adjacency, tf)
                       .transform;
        tb.a_proto = fit_prototype_transform(proto_s, proto_t, tf).transform;

        Rng rng(Rng::mix(seed, 77));
        GeneratorParams gen = GeneratorParams::make(6, 6, 3, 24, rng);
        DiscriminatorParams disc = DiscriminatorParams::make(6, 3, 24, rng);

        auto transformed_batch = [&](const TrafficSeries& src, std::size_t begin,
                                     std::size_t count) {
            std::vector<Mat> out;
            for (std::size_t k = 0; k < count; ++k)
                out.push_back(
                    generate(src.frames[(begin + k) % src.size()].values, gen, tb));
            return out;
        };

        double align0 = -1.0;
        const std::size_t epochs = 300, batch_size = 8;
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            const std::size_t begin = (epoch * batch_size) % train_len;
            const auto transformed = transformed_batch(source_train, begin, batch_size);
            if (align0 < 0) align0 = alignment_loss(transformed, proto_t);

            std::vector<LabeledFrame> dbatch;
            for (const Mat& t : transformed) dbatch.push_back({t, 0});
            for (std::size_t k = 0; k < batch_size; ++k)
                dbatch.push_back(
                    {target_train.frames[(begin + k) % train_len].values, 1});
            train_step_discriminator(disc, dbatch, 0.02);

            GeneratorBatch gb;
            for (std::size_t k = 0; k < batch_size; ++k)
                gb.raw.push_back(source_train.frames[(begin + k) % train_len].values);
            gb.align_target = &proto_t;
            gb.disc_server = &disc;
            for (std::size_t k = 0; k < batch_size; ++k)
                gb.server_counterpart.push_back(
                    target_train.frames[(begin + k) % train_len].values);
            gb.lambda1 = 0.7;
            gb.lambda2 = 0.0;
            train_step_generator(gen, tb, gb, 0.03);
        }

        const auto final_transformed = transformed_batch(source_train, 0, train_len);
        const double align1 = alignment_loss(final_transformed, proto_t);
        align_drops.push_back((align0 - align1) / std::max(align0, 1e-12));

        // Held-out accuracy of the trained discriminator.
        std::size_t correct = 0, total = 0;
        const auto held_transformed = transformed_batch(source_held, 0, source_held.size());
        for (const Mat& t : held_transformed) {
            const auto p = disc.classify(t);
            correct += p[0] > 0.5 ? 1 : 0;
            ++total;
        }
        for (const TrafficFrame& f : target_held.frames) {
            const auto p = disc.classify(f.values);
            correct += p[1] > 0.5 ? 1 : 0;
            ++total;
        }
        accuracies.push_back(static_cast<double>(correct) / static_cast<double>(total));
    }
    const double med_drop = median(align_drops);
    const double med_acc = median(accuracies);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "median alignment drop %.1f%% (need >=50%%), held-out disc accuracy %.3f "
                  "(need [0.35,0.65])",
                  100.0 * med_drop, med_acc);
    report("domain-adaptation-benefit", med_drop >= 0.5 && med_acc >= 0.35 && med_acc <= 0.65,
           buf);
}

// ---------------------------------------------------------------- criterion 8
void transfer_benefit() {
    const auto start = std::chrono::steady_clock::now();
    std::size_t wins = 0;
    std::vector<double> improvements;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        // 5% of 300 frames leaves the target exactly one training window;
        // the aggregated windows supply the temporal structure the baseline
        // cannot see.
        SynthesisSpec spec;
        spec.cities = {CitySpec{8, {1.5, 0.8, 1.2}, {0.6, -0.4, 0.2}},
                       CitySpec{8, {0.7, 1.3, 0.9}, {-0.5, 0.3, -0.2}},
                       CitySpec{8, {1.2, 1.1, 0.7}, {0.3, 0.5, -0.4}},
                       CitySpec{8, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}};
        spec.series_length = 300;
        spec.noise_level = 0.15;
        spec.amplitude = 1.0;
        auto cities = synthesize_multi_city(spec, seed);

        FederationData data;
        data.target = std::move(cities.back());
        cities.pop_back();
        data.sources = std::move(cities);

        FederationConfig cfg;
        cfg.rounds = 40;
        cfg.batches_per_round = 2;
        cfg.window_in = 12;
        cfg.window_out = 3;
        cfg.train_fraction = 0.05;
        cfg.val_fraction = 0.10;
        cfg.test_fraction = 0.10;
        cfg.tda_hidden = 24;
        cfg.transform_fit_steps = 500;
        cfg.predictor_epochs_per_round = 1;
        cfg.predictor_final_epochs = 120;
        cfg.predictor_step = 0.2;
        cfg.generator_step = 0.01;
        cfg.discriminator_step = 0.03;
        cfg.serialized = true;
        cfg.seed = seed;

        const FederationResult fed = run_federation(cfg, data);
        const EvalMetrics base = run_no_transfer_baseline(cfg, data);
        const double improvement =
            (base.mae_overall - fed.metrics.mae_overall) / base.mae_overall;
        improvements.push_back(improvement);
        if (fed.metrics.mae_overall < base.mae_overall) ++wins;
    }
    const double med = median(improvements);
    const double secs = seconds_since(start);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "wins %zu/10 (need >=9), median improvement %.1f%% (need >=5%%), %.0fs "
                  "(budget 600s)",
                  wins, 100.0 * med, secs);
    report("transfer-benefit", wins >= 9 && med >= 0.05 && secs < 600.0, buf);
}

// ---------------------------------------------------------------- criterion 9
void fpt_degeneracy() {
    const std::size_t n = 2, rounds = 5;
    SynthesisSpec spec;
    spec.cities = {CitySpec{4, {1.2, 0.9, 1.1}, {0.4, -0.2, 0.1}},
                   CitySpec{4, {0.8, 1.1, 1.0}, {-0.3, 0.1, 0.2}},
                   CitySpec{3, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}};
    spec.series_length = 60;
    spec.noise_level = 0.05;
    auto cities = synthesize_multi_city(spec, 71);
    FederationData data;
    data.target = std::move(cities.back());
    cities.pop_back();
    data.sources = std::move(cities);

    FederationConfig cfg;
    cfg.rounds = rounds;
    cfg.batches_per_round = 1;
    cfg.freeze_period_server = 1;
    cfg.freeze_period_client = 1;
    cfg.window_in = 4;
    cfg.window_out = 2;
    cfg.train_fraction = 0.3;
    cfg.val_fraction = 0.1;
    cfg.test_fraction = 0.2;
    cfg.tda_hidden = 8;
    cfg.serialized = true;

    const SeriesSplit split = split_series(data.target.series, cfg.train_fraction,
                                           cfg.val_fraction, cfg.test_fraction);
    const Prototype proto = compute_prototype(split.train);
    const std::uint64_t key = 0xACCE;

    struct PartyInit {
        TransformBundle bundle;
        GeneratorParams gen;
        DiscriminatorParams disc;
    };
    std::vector<PartyInit> init;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(Rng::mix(4000, i));
        PartyInit pi;
        TransformFitConfig tf;
        tf.opt.epochs = 100;
        tf.seed = Rng::mix(4100, i);
        pi.bundle.a_net = fit_network_transform(data.sources[i].network.adjacency,
                                                data.target.network.adjacency, tf)
                              .transform;
        pi.bundle.a_proto =
            fit_prototype_transform(compute_prototype(data.sources[i].series), proto, tf)
                .transform;
        pi.gen = GeneratorParams::make(4, 3, 3, cfg.tda_hidden, rng);
        pi.disc = DiscriminatorParams::make(3, 3, cfg.tda_hidden, rng);
        init.push_back(std::move(pi));
    }
    Rng srng(4200);
    const DiscriminatorParams server_disc_init = DiscriminatorParams::make(3, 3, cfg.tda_hidden, srng);

    // Runtime path.
    std::vector<ClientState> clients(n);
    for (std::size_t i = 0; i < n; ++i) {
        clients[i].id = i;
        clients[i].n = n;
        clients[i].data = &data.sources[i].series;
        clients[i].bundle = init[i].bundle;
        clients[i].gen = init[i].gen;
        clients[i].disc = init[i].disc;
        clients[i].target_proto = proto;
        clients[i].box = CipherBox{key, n};
        clients[i].cache.configure("server_disc_loss", 1);
        clients[i].cache.configure("agg_exemplars", 1);
        clients[i].cache.configure("client_disc_loss", 1);
    }
    ServerState server;
    server.n = n;
    server.lanes = 1;
    server.disc = server_disc_init;
    server.predictor = make_predictor(cfg.predictor_kind, cfg.window_in, cfg.window_out);
    server.local_windows = make_windows(split.train, cfg.window_in, cfg.window_out);
    server.local_frames = split.train.frames;
    server.cache.configure("agg_dataset", 1);

    std::vector<std::vector<ClientRoundStats>> live(n);
    std::vector<ServerRoundResult> live_server;
    for (std::size_t r = 0; r < rounds; ++r) {
        std::vector<std::vector<WireMessage>> inbox(n);
        for (std::size_t i = 0; i < n; ++i) {
            ClientRoundResult res = client_round(clients[i], r, cfg);
            live[i].push_back(res.stats);
            inbox[i] = std::move(res.outgoing);
        }
        ServerRoundResult sres = server_round(server, r, inbox, cfg);
        for (std::size_t i = 0; i < n; ++i)
            client_receive_round(clients[i], r, sres.broadcasts, sres.control);
        live_server.push_back(std::move(sres));
    }

    // Straight-line sequential reference.
    struct RefClient {
        GeneratorParams gen;
        DiscriminatorParams disc;
    };
    std::vector<RefClient> ref;
    for (std::size_t i = 0; i < n; ++i) ref.push_back({init[i].gen, init[i].disc});
    DiscriminatorParams ref_sdisc = server_disc_init;
    auto ref_pred = make_predictor(cfg.predictor_kind, cfg.window_in, cfg.window_out);
    std::vector<Mat> ref_aggs;
    Mat prev_agg;
    double prev_server_loss = 0.0;
    bool have_server_loss = false;
    double worst = 0.0;

    auto fit_reference_predictor = [&](std::size_t r) {
        std::vector<PredictionWindow> windows =
            make_windows(split.train, cfg.window_in, cfg.window_out);
        if (ref_aggs.size() >= cfg.window_in + cfg.window_out) {
            TrafficSeries agg_series;
            for (const Mat& m : ref_aggs) {
                TrafficFrame f(m.rows(), m.cols());
                f.values = m;
                agg_series.frames.push_back(std::move(f));
            }
            auto aw = make_windows(agg_series, cfg.window_in, cfg.window_out);
            windows.insert(windows.end(), aw.begin(), aw.end());
        }
        OptConfig popt;
        popt.step = cfg.predictor_step;
        popt.epochs = cfg.predictor_epochs_per_round;
        const TrainTrace ptrace = ref_pred->fit(windows, popt);
        worst = std::max(worst, std::abs(ptrace.final_loss() - live_server[r].predictor_loss));
    };

    for (std::size_t r = 0; r < rounds; ++r) {
        std::vector<Mat> transformed(n);
        for (std::size_t i = 0; i < n; ++i)
            transformed[i] = generate(
                data.sources[i].series.frames[r % data.sources[i].series.size()].values,
                ref[i].gen, init[i].bundle);
        if (r == 0) {
            const CipherBox box{key, n};
            std::vector<Ciphertext> cts;
            for (std::size_t i = 0; i < n; ++i)
                cts.push_back(encrypt_frame(transformed[i], box, i, 0, 0));
            prev_agg = open_aggregate_sum(combine_ciphertexts(cts), n);
            prev_agg *= 1.0 / static_cast<double>(n);
            ref_aggs.push_back(prev_agg);
            for (std::size_t i = 0; i < n; ++i) {
                const double align = alignment_loss({transformed[i]}, proto);
                worst = std::max(worst, std::abs(align - live[i][0].gen_total));
            }
            fit_reference_predictor(0);
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<LabeledFrame> dbatch{{transformed[i], 0}, {prev_agg, 1}};
            const double dloss = discriminator_loss(ref[i].disc, dbatch);
            GeneratorBatch gb;
            gb.raw = {data.sources[i].series.frames[r % data.sources[i].series.size()].values};
            gb.align_target = &proto;
            gb.disc_client = &ref[i].disc;
            gb.client_counterpart = {prev_agg};
            gb.lambda2 = cfg.lambda2;
            std::vector<double> grad;
            const auto parts = generator_loss(ref[i].gen, init[i].bundle, gb, &grad);
            std::vector<double> packed = ref[i].gen.pack();
            for (std::size_t k = 0; k < packed.size(); ++k)
                packed[k] -= cfg.generator_step * grad[k];
            ref[i].gen.unpack(packed);
            const double total = parts.alignment -
                                 cfg.lambda1 * (have_server_loss ? prev_server_loss : 0.0) -
                                 cfg.lambda2 * dloss;
            train_step_discriminator(ref[i].disc, dbatch, cfg.discriminator_step);
            worst = std::max(worst, std::abs(total - live[i][r].gen_total));
            worst = std::max(worst, std::abs(dloss - live[i][r].disc_client));
        }
        Mat agg(transformed[0].rows(), transformed[0].cols());
        for (const Mat& t : transformed) agg += t;
        agg *= 1.0 / static_cast<double>(n);
        prev_agg = agg;
        ref_aggs.push_back(agg);

        std::vector<LabeledFrame> sbatch{
            {ref_aggs.back(), 0}, {split.train.frames[r % split.train.size()].values, 1}};
        prev_server_loss = train_step_discriminator(ref_sdisc, sbatch, cfg.discriminator_step);
        have_server_loss = true;
        worst = std::max(worst, std::abs(prev_server_loss - live_server[r].disc_loss));
        fit_reference_predictor(r);
    }
    char buf[120];
    std::snprintf(buf, sizeof(buf), "max per-round loss gap %.2e (tol 1e-9)", worst);
    report("fpt-degeneracy", worst <= 1e-9, buf);
}

// --------------------------------------------------------------- criterion 10
void dijkstra_oracle() {
    Rng rng(1010);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const std::size_t nodes = 2 + rng.uniform_index(11);
        RoadNetwork net(nodes);
        for (std::size_t i = 0; i + 1 < nodes; ++i)
            if (rng.uniform01() < 0.8)
                net.add_edge(i, i + 1, static_cast<double>(rng.uniform_index(641)) / 64.0);
        for (std::size_t e = 0; e < nodes; ++e) {
            const std::size_t a = rng.uniform_index(nodes);
            const std::size_t b = rng.uniform_index(nodes);
            if (a != b && net.adjacency(a, b) == 0.0)
                net.add_edge(a, b, static_cast<double>(rng.uniform_index(641)) / 64.0);
        }
        const DistanceMatrix got = shortest_distance_matrix(net);

        const double inf = std::numeric_limits<double>::infinity();
        Mat want(nodes, nodes, inf);
        for (std::size_t i = 0; i < nodes; ++i) want(i, i) = 0.0;
        for (const Edge& e : net.edges) {
            want(e.src, e.dst) = std::min(want(e.src, e.dst), e.weight);
            want(e.dst, e.src) = std::min(want(e.dst, e.src), e.weight);
        }
        for (std::size_t k = 0; k < nodes; ++k)
            for (std::size_t i = 0; i < nodes; ++i)
                for (std::size_t j = 0; j < nodes; ++j)
                    if (want(i, k) + want(k, j) < want(i, j))
                        want(i, j) = want(i, k) + want(k, j);

        for (std::size_t i = 0; i < nodes && ok; ++i)
            for (std::size_t j = 0; j < nodes && ok; ++j) {
                if (std::isinf(want(i, j)))
                    ok = got.dist(i, j) == got.unreachable_sentinel;
                else
                    ok = got.dist(i, j) == want(i, j);
            }
    }
    report("dijkstra-oracle", ok, ok ? "exact agreement on 100 random graphs <= 12 nodes"
                                     : "disagreement with Floyd-Warshall");
}

// --------------------------------------------------------------- criterion 11
void determinism() {
#ifndef FEDTT_CLI_PATH
    report("determinism", false, "CLI path not configured");
#else
    const fs::path root = fs::temp_directory_path() / "fedtt_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg_path = root / "cfg.json";
    {
        std::ofstream out(cfg_path);
        out << R"({
  "seed": 77,
  "out_dir": ")" << (root / "run").string() << R"(",
  "data": {"synthesis": {"cities": [
      {"sensors": 4, "scale": [1.2, 0.8, 1.1], "offset": [0.4, -0.2, 0.1]},
      {"sensors": 4, "scale": [0.9, 1.1, 1.0], "offset": [-0.2, 0.1, 0.3]},
      {"sensors": 4}
    ], "series_length": 80, "noise_level": 0.05}},
  "federation": {"rounds": 4, "window_in": 4, "window_out": 2,
                  "train_fraction": 0.3, "val_fraction": 0.1, "test_fraction": 0.2,
                  "tda_hidden": 8, "transform_fit_steps": 100,
                  "predictor_epochs_per_round": 1, "predictor_final_epochs": 10}
})";
    }
    std::vector<std::string> reports;
    bool ran_ok = true;
    for (int run = 0; run < 3; ++run) {
        const std::string cmd = std::string(FEDTT_CLI_PATH) + " transfer --config " +
                                cfg_path.string() + " --deterministic > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0) {
            ran_ok = false;
            break;
        }
        std::ifstream in(root / "run" / "report.txt", std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        reports.push_back(os.str());
    }
    const bool identical = ran_ok && reports.size() == 3 && reports[0] == reports[1] &&
                           reports[1] == reports[2] && !reports[0].empty();
    fs::remove_all(root);
    report("determinism", identical,
           identical ? "3 CLI runs produced byte-identical reports"
                     : "reports differ or a run failed");
#endif
}

}  // namespace

int main() {
    std::printf("fedtt acceptance suite\n");
    protocol_correctness();
    privacy_offset_invariance();
    homomorphic_bootstrap();
    gradient_suite();
    planted_transform_recovery();
    imputation_benefit();
    domain_adaptation_benefit();
    transfer_benefit();
    fpt_degeneracy();
    dijkstra_oracle();
    determinism();
    if (g_failures) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
