#include "doctest.h"

#include <cmath>

#include "fedtt/tda.hpp"
#include "test_support.hpp"

using namespace fedtt;

namespace {

// Straight-line re-evaluation of a three-layer branch on a flattened input.
std::vector<double> mlp_oracle(const Mlp& net, const std::vector<double>& x) {
    std::vector<double> a = x;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
        const std::size_t in = net.dims[l], out = net.dims[l + 1];
        std::vector<double> y(out);
        for (std::size_t i = 0; i < out; ++i) {
            double s = net.params[off + out * in + i];
            for (std::size_t j = 0; j < in; ++j) s += net.params[off + i * in + j] * a[j];
            y[i] = (l + 2 == net.dims.size()) ? s : std::tanh(s);
        }
        a = std::move(y);
        off += out * in + out;
    }
    return a;
}

std::vector<double> flat(const Mat& m) { return m.storage(); }

}  // namespace

TEST_CASE("compute_prototype hand values and the naive accumulation oracle") {
    TrafficSeries constant;
    for (int t = 0; t < 5; ++t) {
        TrafficFrame f(2, 3);
        for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = 4.5;
        constant.frames.push_back(f);
    }
    const Prototype pc = compute_prototype(constant);
    for (std::size_t i = 0; i < pc.values.size(); ++i) CHECK(pc.values[i] == 4.5);

    Rng rng(31);
    TrafficSeries two;
    two.frames.push_back(tsup::random_frame(3, 3, rng));
    two.frames.push_back(tsup::random_frame(3, 3, rng));
    const Prototype p2 = compute_prototype(two);
    for (std::size_t i = 0; i < p2.values.size(); ++i)
        CHECK(p2.values[i] == doctest::Approx(0.5 * (two.frames[0].values[i] +
                                                     two.frames[1].values[i]))
                                  .epsilon(1e-15));

    TrafficSeries thirty = tsup::random_series(30, 4, 3, rng);
    const Prototype p30 = compute_prototype(thirty);
    for (std::size_t i = 0; i < p30.values.size(); ++i) {
        double acc = 0.0;
        for (const TrafficFrame& f : thirty.frames) acc += f.values[i];
        REQUIRE(p30.values[i] == doctest::Approx(acc / 30.0).epsilon(1e-12));
    }

    CHECK_THROWS_AS(compute_prototype(TrafficSeries{}), DataError);
}

TEST_CASE("fit_network_transform: identity optimum and the zero case") {
    Rng rng(32);
    Mat adj = tsup::random_mat(4, 4, rng, 0.0, 2.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < i; ++j) adj(j, i) = adj(i, j);

    TransformFitConfig cfg;
    cfg.init = TransformFitConfig::Init::identity;
    cfg.opt.epochs = 0;
    const TransformFit fit = fit_network_transform(adj, adj, cfg);
    CHECK(fit.residual == doctest::Approx(0.0).epsilon(1e-15));

    const Mat zero(3, 3);
    TransformFitConfig gz;
    gz.opt.epochs = 5;
    const TransformFit zfit = fit_network_transform(zero, zero, gz);
    CHECK(zfit.residual == 0.0);
}

TEST_CASE("fit_network_transform recovers a planted congruence") {
    // The congruence objective is quartic; descent from the small random
    // init converges on this pinned instance (not every draw does).
    Rng rng(34);
    Mat adj_src = tsup::random_mat(5, 5, rng, 0.0, 1.5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < i; ++j) adj_src(j, i) = adj_src(i, j);
    const Mat planted = tsup::random_mat(4, 5, rng, -0.8, 0.8);
    const Mat adj_dst = matmul(matmul(planted, adj_src), transpose(planted));

    TransformFitConfig cfg;
    cfg.opt.epochs = 2000;
    cfg.seed = 5;
    const TransformFit fit = fit_network_transform(adj_src, adj_dst, cfg);
    CHECK(fit.residual < 1e-4 * adj_dst.frobenius());
}

TEST_CASE("fit_prototype_transform: planted solution and the zero-image stall") {
    Rng rng(34);
    const Mat proto_src = tsup::random_mat(5, 3, rng);
    const Mat planted = tsup::random_mat(4, 5, rng);
    const Mat proto_dst = matmul(planted, proto_src);

    TransformFitConfig cfg;
    cfg.opt.epochs = 1200;
    cfg.seed = 6;
    const TransformFit fit = fit_prototype_transform({proto_src}, {proto_dst}, cfg);
    CHECK(fit.residual < 1e-4 * proto_dst.frobenius());

    // Identity init on equal prototypes: zero residual at initialization.
    TransformFitConfig idc;
    idc.init = TransformFitConfig::Init::identity;
    idc.opt.epochs = 0;
    const TransformFit idfit = fit_prototype_transform({proto_src}, {proto_src}, idc);
    CHECK(idfit.residual == doctest::Approx(0.0).epsilon(1e-15));

    // Zero source prototype: the image is {0}; the residual stalls at |P_dst|.
    const Mat zsrc(5, 3);
    TransformFitConfig zc;
    zc.opt.epochs = 50;
    const TransformFit zfit = fit_prototype_transform({zsrc}, {proto_dst}, zc);
    CHECK(zfit.residual == doctest::Approx(proto_dst.frobenius()).epsilon(1e-12));
}

TEST_CASE("transform-fit gradients match finite differences") {
    Rng rng(35);
    Mat adj_src = tsup::random_mat(4, 4, rng, 0.0, 1.0);
    const Mat adj_dst_any = tsup::random_mat(3, 3, rng, 0.0, 1.0);
    const Mat a0 = tsup::random_mat(3, 4, rng, -0.5, 0.5);

    const LossFn net_fn = [&](const std::vector<double>& p, std::vector<double>* g) {
        Mat a(3, 4);
        for (std::size_t i = 0; i < p.size(); ++i) a[i] = p[i];
        return network_transform_loss(a, adj_src, adj_dst_any, g);
    };
    CHECK(tsup::fd_check(net_fn, a0.storage(), 25, 11).max_rel_err < 1e-4);

    const Mat proto_src = tsup::random_mat(4, 3, rng);
    const Mat proto_dst = tsup::random_mat(3, 3, rng);
    const LossFn proto_fn = [&](const std::vector<double>& p, std::vector<double>* g) {
        Mat a(3, 4);
        for (std::size_t i = 0; i < p.size(); ++i) a[i] = p[i];
        return prototype_transform_loss(a, proto_src, proto_dst, g);
    };
    CHECK(tsup::fd_check(proto_fn, a0.storage(), 25, 12).max_rel_err < 1e-4);
}

TEST_CASE("generate: zero weights give zero output; branch scaling is linear") {
    Rng rng(36);
    GeneratorParams gen = GeneratorParams::make(3, 2, 3, 6, rng);
    TransformBundle tb;
    tb.a_net = tsup::random_mat(2, 3, rng);
    tb.a_proto = tsup::random_mat(2, 3, rng);
    const Mat x = tsup::random_mat(3, 3, rng);

    SUBCASE("all-zero weights and biases") {
        std::fill(gen.net_branch.params.begin(), gen.net_branch.params.end(), 0.0);
        std::fill(gen.proto_branch.params.begin(), gen.proto_branch.params.end(), 0.0);
        std::fill(gen.direct_branch.params.begin(), gen.direct_branch.params.end(), 0.0);
        const Mat out = generate(x, gen, tb);
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
    }

    SUBCASE("doubling one branch's final layer doubles its contribution") {
        const Mat base = generate(x, gen, tb);
        GeneratorParams gone = gen;
        std::fill(gone.direct_branch.params.begin(), gone.direct_branch.params.end(), 0.0);
        const Mat without_direct = generate(x, gone, tb);
        const Mat direct_contrib = base - without_direct;

        // Scale the direct branch's last layer (weights and bias) by 2.
        GeneratorParams scaled = gen;
        const std::size_t out_dim = scaled.direct_branch.dims.back();
        const std::size_t in_dim = scaled.direct_branch.dims[scaled.direct_branch.dims.size() - 2];
        const std::size_t last = scaled.direct_branch.param_count() - out_dim * in_dim - out_dim;
        for (std::size_t i = last; i < scaled.direct_branch.param_count(); ++i)
            scaled.direct_branch.params[i] *= 2.0;
        const Mat doubled = generate(x, scaled, tb);
        for (std::size_t i = 0; i < doubled.size(); ++i)
            REQUIRE(doubled[i] == doctest::Approx(base[i] + direct_contrib[i]).epsilon(1e-10));
    }
}

TEST_CASE("generate matches the straight-line oracle within 1e-10") {
    Rng rng(37);
    GeneratorParams gen = GeneratorParams::make(3, 2, 3, 5, rng);
    TransformBundle tb;
    tb.a_net = tsup::random_mat(2, 3, rng);
    tb.a_proto = tsup::random_mat(2, 3, rng);
    const Mat x = tsup::random_mat(3, 3, rng);
    const Mat got = generate(x, gen, tb);

    const auto y1 = mlp_oracle(gen.net_branch, flat(matmul(tb.a_net, x)));
    const auto y2 = mlp_oracle(gen.proto_branch, flat(matmul(tb.a_proto, x)));
    const auto y3 = mlp_oracle(gen.direct_branch, flat(x));
    for (std::size_t i = 0; i < got.size(); ++i)
        REQUIRE(got[i] == doctest::Approx(y1[i] + y2[i] + y3[i]).epsilon(1e-10));
}

TEST_CASE("alignment_loss hand values and naive oracle") {
    Rng rng(38);
    Prototype proto{tsup::random_mat(3, 3, rng)};

    CHECK(alignment_loss({proto.values}, proto) == 0.0);

    Mat plus_one = proto.values;
    for (std::size_t i = 0; i < plus_one.size(); ++i) plus_one[i] += 1.0;
    CHECK(alignment_loss({plus_one}, proto) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<Mat> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(tsup::random_mat(3, 3, rng));
    double want = 0.0;
    for (const Mat& m : batch) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) s += std::abs(m[i] - proto.values[i]);
        want += s / static_cast<double>(m.size());
    }
    want /= batch.size();
    CHECK(alignment_loss(batch, proto) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("discriminator_loss: uniform predictor gives ln 2, confident one goes to zero") {
    Rng rng(39);
    DiscriminatorParams d = DiscriminatorParams::make(2, 3, 4, rng);
    std::fill(d.net.params.begin(), d.net.params.end(), 0.0);  // logits (0,0) -> (0.5,0.5)

    std::vector<LabeledFrame> batch;
    batch.push_back({tsup::random_mat(2, 3, rng), 0});
    batch.push_back({tsup::random_mat(2, 3, rng), 1});
    CHECK(discriminator_loss(d, batch) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const auto p = d.classify(batch[0].values);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-9));

    // Push the last-layer bias towards class 0: p(class 0) -> 1, loss -> 0.
    DiscriminatorParams sure = DiscriminatorParams::make(2, 3, 4, rng);
    std::fill(sure.net.params.begin(), sure.net.params.end(), 0.0);
    sure.net.params[sure.net.param_count() - 2] = 40.0;   // logit0 bias
    sure.net.params[sure.net.param_count() - 1] = -40.0;  // logit1 bias
    const std::vector<LabeledFrame> zeros{{Mat(2, 3), 0}};
    CHECK(discriminator_loss(sure, zeros) < 1e-12);
}

TEST_CASE("discriminator_loss matches a naive per-sample oracle") {
    Rng rng(40);
    DiscriminatorParams d = DiscriminatorParams::make(2, 3, 4, rng);
    std::vector<LabeledFrame> batch;
    for (int i = 0; i < 6; ++i) batch.push_back({tsup::random_mat(2, 3, rng), i % 2});

    double want = 0.0;
    for (const LabeledFrame& lf : batch) {
        const auto logits = mlp_oracle(d.net, flat(lf.values));
        const double m = std::max(logits[0], logits[1]);
        const double z = std::exp(logits[0] - m) + std::exp(logits[1] - m);
        const double logp = (lf.label == 0 ? logits[0] : logits[1]) - m - std::log(z);
        want -= logp;
    }
    want /= batch.size();
    CHECK(discriminator_loss(d, batch) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("discriminator output is a valid distribution for extreme inputs") {
    Rng rng(41);
    DiscriminatorParams d = DiscriminatorParams::make(2, 2, 6, rng);
    for (int trial = 0; trial < 40; ++trial) {
        const double scale = std::pow(10.0, static_cast<double>(rng.uniform_index(9)) - 2.0);
        const Mat x = tsup::random_mat(2, 2, rng, -scale, scale);
        const auto p = d.classify(x);
        REQUIRE(p[0] >= 0.0);
        REQUIRE(p[1] >= 0.0);
        REQUIRE(std::abs(p[0] + p[1] - 1.0) <= 1e-9);
    }
}

TEST_CASE("generator_total_loss composition") {
    CHECK(generator_total_loss(1.0, 0.5, 0.25, 0.7, 0.4) ==
          doctest::Approx(0.55).epsilon(1e-15));
    CHECK(generator_total_loss(0.8, 123.0, 55.0, 0.0, 0.0) == 0.8);
}

TEST_CASE("generator_loss composes its parts and matches component ops") {
    Rng rng(42);
    GeneratorParams gen = GeneratorParams::make(3, 2, 3, 5, rng);
    TransformBundle tb;
    tb.a_net = tsup::random_mat(2, 3, rng);
    tb.a_proto = tsup::random_mat(2, 3, rng);
    Prototype proto{tsup::random_mat(2, 3, rng)};
    DiscriminatorParams ds = DiscriminatorParams::make(2, 3, 4, rng);
    DiscriminatorParams dc = DiscriminatorParams::make(2, 3, 4, rng);

    GeneratorBatch batch;
    batch.raw = {tsup::random_mat(3, 3, rng), tsup::random_mat(3, 3, rng)};
    batch.align_target = &proto;
    batch.disc_server = &ds;
    batch.disc_client = &dc;
    batch.server_counterpart = {tsup::random_mat(2, 3, rng)};
    batch.client_counterpart = {tsup::random_mat(2, 3, rng)};
    batch.lambda1 = 0.7;
    batch.lambda2 = 0.4;

    const GeneratorLossParts parts = generator_loss(gen, tb, batch, nullptr);

    std::vector<Mat> transformed;
    for (const Mat& x : batch.raw) transformed.push_back(generate(x, gen, tb));
    const double align = alignment_loss(transformed, proto);
    std::vector<LabeledFrame> smix, cmix;
    for (const Mat& t : transformed) smix.push_back({t, 0});
    for (const Mat& t : batch.server_counterpart) smix.push_back({t, 1});
    for (const Mat& t : transformed) cmix.push_back({t, 0});
    for (const Mat& t : batch.client_counterpart) cmix.push_back({t, 1});
    const double ls = discriminator_loss(ds, smix);
    const double lc = discriminator_loss(dc, cmix);

    CHECK(parts.alignment == doctest::Approx(align).epsilon(1e-12));
    CHECK(parts.disc_server == doctest::Approx(ls).epsilon(1e-12));
    CHECK(parts.disc_client == doctest::Approx(lc).epsilon(1e-12));
    CHECK(parts.total ==
          doctest::Approx(generator_total_loss(align, ls, lc, 0.7, 0.4)).epsilon(1e-12));
}

TEST_CASE("generator gradient matches finite differences (both discriminators live)") {
    Rng rng(43);
    GeneratorParams gen = GeneratorParams::make(3, 2, 2, 4, rng);
    TransformBundle tb;
    tb.a_net = tsup::random_mat(2, 3, rng);
    tb.a_proto = tsup::random_mat(2, 3, rng);
    Prototype proto{tsup::random_mat(2, 2, rng)};
    DiscriminatorParams ds = DiscriminatorParams::make(2, 2, 4, rng);
    DiscriminatorParams dc = DiscriminatorParams::make(2, 2, 4, rng);

    GeneratorBatch batch;
    batch.raw = {tsup::random_mat(3, 2, rng), tsup::random_mat(3, 2, rng)};
    batch.align_target = &proto;
    batch.disc_server = &ds;
    batch.disc_client = &dc;
    batch.server_counterpart = {tsup::random_mat(2, 2, rng)};
    batch.client_counterpart = {tsup::random_mat(2, 2, rng)};

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
    CHECK(tsup::fd_check(fn, gen.pack(), 30, 77).max_rel_err < 1e-4);
}

TEST_CASE("discriminator gradient matches finite differences") {
    Rng rng(44);
    DiscriminatorParams d = DiscriminatorParams::make(3, 2, 5, rng);
    std::vector<LabeledFrame> batch;
    for (int i = 0; i < 5; ++i) batch.push_back({tsup::random_mat(3, 2, rng), i % 2});

    DiscriminatorParams scratch = d;
    const LossFn fn = [&](const std::vector<double>& p, std::vector<double>* g) {
        scratch.net.params = p;
        return discriminator_loss_grad(scratch, batch, g);
    };
    CHECK(tsup::fd_check(fn, d.net.params, 25, 88).max_rel_err < 1e-4);
}

TEST_CASE("train steps: zero step is a no-op, tiny steps do not increase the loss") {
    Rng rng(45);
    GeneratorParams gen = GeneratorParams::make(3, 2, 2, 4, rng);
    TransformBundle tb;
    tb.a_net = tsup::random_mat(2, 3, rng);
    tb.a_proto = tsup::random_mat(2, 3, rng);
    Prototype proto{tsup::random_mat(2, 2, rng)};
    DiscriminatorParams dc = DiscriminatorParams::make(2, 2, 4, rng);

    GeneratorBatch batch;
    batch.raw = {tsup::random_mat(3, 2, rng)};
    batch.align_target = &proto;
    batch.disc_client = &dc;
    batch.client_counterpart = {tsup::random_mat(2, 2, rng)};

    const auto before = gen.pack();
    train_step_generator(gen, tb, batch, 0.0);
    CHECK(gen.pack() == before);

    const double l0 = generator_loss(gen, tb, batch, nullptr).total;
    train_step_generator(gen, tb, batch, 1e-6);
    const double l1 = generator_loss(gen, tb, batch, nullptr).total;
    CHECK(l1 <= l0 + 1e-9);

    std::vector<LabeledFrame> dbatch{{tsup::random_mat(2, 2, rng), 0},
                                     {tsup::random_mat(2, 2, rng), 1}};
    DiscriminatorParams d2 = DiscriminatorParams::make(2, 2, 4, rng);
    const double d0 = discriminator_loss(d2, dbatch);
    train_step_discriminator(d2, dbatch, 1e-6);
    CHECK(discriminator_loss(d2, dbatch) <= d0 + 1e-9);
}
