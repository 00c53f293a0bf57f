#include "fedtt/tda.hpp"

#include <cmath>

namespace fedtt {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::vector<double> flatten(const Mat& m) {
    return m.storage();
}

Mat unflatten(std::span<const double> v, std::size_t rows, std::size_t cols) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i];
    return m;
}

}  // namespace

Prototype compute_prototype(const TrafficSeries& series) {
    if (series.empty()) throw DataError("compute_prototype: empty series");
    Prototype p;
    p.values = Mat(series.sensors(), series.features());
    for (const TrafficFrame& f : series.frames) p.values += f.values;
    p.values *= 1.0 / static_cast<double>(series.size());
    return p;
}

double network_transform_loss(const Mat& a, const Mat& adj_src, const Mat& adj_dst,
                              std::vector<double>* grad) {
    // E = A * B * A^T - C;  dL/dA = 2 (E A B^T + E^T A B)
    const Mat ab = matmul(a, adj_src);
    Mat e = matmul(ab, transpose(a));
    e -= adj_dst;
    double loss = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) loss += e[i] * e[i];
    if (grad) {
        const Mat g1 = matmul(e, matmul(a, transpose(adj_src)));
        const Mat g2 = matmul(transpose(e), ab);
        if (grad->size() != a.size()) grad->assign(a.size(), 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) (*grad)[i] = 2.0 * (g1[i] + g2[i]);
    }
    return loss;
}

double prototype_transform_loss(const Mat& a, const Mat& proto_src, const Mat& proto_dst,
                                std::vector<double>* grad) {
    Mat e = matmul(a, proto_src);
    e -= proto_dst;
    double loss = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) loss += e[i] * e[i];
    if (grad) {
        const Mat g = matmul(e, transpose(proto_src));
        if (grad->size() != a.size()) grad->assign(a.size(), 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) (*grad)[i] = 2.0 * g[i];
    }
    return loss;
}

namespace {

Mat init_transform(std::size_t rows, std::size_t cols, const TransformFitConfig& cfg) {
    if (cfg.init == TransformFitConfig::Init::identity) {
        if (rows != cols)
            throw std::invalid_argument("identity init requires a square transform");
        return Mat::identity(rows);
    }
    Rng rng(cfg.seed);
    return rng.gaussian_mat(rows, cols, cfg.init_sigma);
}

TransformFit run_fit(Mat a, const LossFn& fn, const TransformFitConfig& cfg) {
    std::vector<double> packed = a.storage();
    TransformFit fit;
    fit.trace = descend(packed, fn, cfg.opt);
    for (std::size_t i = 0; i < packed.size(); ++i) a[i] = packed[i];
    fit.transform = std::move(a);
    fit.residual = std::sqrt(std::max(0.0, fn(packed, nullptr)));
    return fit;
}

}  // namespace

TransformFit fit_network_transform(const Mat& adj_src, const Mat& adj_dst,
                                   const TransformFitConfig& cfg) {
    if (adj_src.rows() != adj_src.cols() || adj_dst.rows() != adj_dst.cols())
        throw std::invalid_argument("fit_network_transform: adjacency matrices must be square");
    const std::size_t rows = adj_dst.rows();
    const std::size_t cols = adj_src.rows();
    Mat a = init_transform(rows, cols, cfg);
    const LossFn fn = [&, rows, cols](const std::vector<double>& p, std::vector<double>* g) {
        return network_transform_loss(unflatten(p, rows, cols), adj_src, adj_dst, g);
    };
    return run_fit(std::move(a), fn, cfg);
}

TransformFit fit_prototype_transform(const Prototype& proto_src, const Prototype& proto_dst,
                                     const TransformFitConfig& cfg) {
    if (proto_src.values.cols() != proto_dst.values.cols())
        throw std::invalid_argument("fit_prototype_transform: feature counts differ");
    const std::size_t rows = proto_dst.values.rows();
    const std::size_t cols = proto_src.values.rows();
    Mat a = init_transform(rows, cols, cfg);
    const LossFn fn = [&, rows, cols](const std::vector<double>& p, std::vector<double>* g) {
        return prototype_transform_loss(unflatten(p, rows, cols), proto_src.values,
                                        proto_dst.values, g);
    };
    return run_fit(std::move(a), fn, cfg);
}

GeneratorParams GeneratorParams::make(std::size_t src_sensors, std::size_t dst_sensors,
                                      std::size_t features, std::size_t hidden, Rng& rng) {
    GeneratorParams p;
    p.src_sensors = src_sensors;
    p.dst_sensors = dst_sensors;
    p.features = features;
    p.hidden = hidden;
    const std::size_t in_t = dst_sensors * features;
    const std::size_t in_d = src_sensors * features;
    const std::size_t out = dst_sensors * features;
    p.net_branch = Mlp({in_t, hidden, hidden, out});
    p.proto_branch = Mlp({in_t, hidden, hidden, out});
    p.direct_branch = Mlp({in_d, hidden, hidden, out});
    p.net_branch.init(rng);
    p.proto_branch.init(rng);
    p.direct_branch.init(rng);
    return p;
}

std::size_t GeneratorParams::param_count() const {
    return net_branch.param_count() + proto_branch.param_count() + direct_branch.param_count();
}

std::vector<double> GeneratorParams::pack() const {
    std::vector<double> out;
    out.reserve(param_count());
    out.insert(out.end(), net_branch.params.begin(), net_branch.params.end());
    out.insert(out.end(), proto_branch.params.begin(), proto_branch.params.end());
    out.insert(out.end(), direct_branch.params.begin(), direct_branch.params.end());
    return out;
}

void GeneratorParams::unpack(std::span<const double> packed) {
    if (packed.size() != param_count())
        throw std::invalid_argument("GeneratorParams::unpack: size mismatch");
    auto it = packed.begin();
    std::copy(it, it + net_branch.param_count(), net_branch.params.begin());
    it += net_branch.param_count();
    std::copy(it, it + proto_branch.param_count(), proto_branch.params.begin());
    it += proto_branch.param_count();
    std::copy(it, it + direct_branch.param_count(), direct_branch.params.begin());
}

Mat generate(const Mat& frame, const GeneratorParams& gen, const TransformBundle& tb) {
    if (frame.rows() != gen.src_sensors || frame.cols() != gen.features)
        throw std::invalid_argument("generate: frame shape differs from generator");
    const Mat net_in = matmul(tb.a_net, frame);
    const Mat proto_in = matmul(tb.a_proto, frame);
    const std::vector<double> y1 = gen.net_branch.forward(flatten(net_in));
    const std::vector<double> y2 = gen.proto_branch.forward(flatten(proto_in));
    const std::vector<double> y3 = gen.direct_branch.forward(flatten(frame));
    Mat out(gen.dst_sensors, gen.features);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = y1[i] + y2[i] + y3[i];
    return out;
}

DiscriminatorParams DiscriminatorParams::make(std::size_t sensors, std::size_t features,
                                              std::size_t hidden, Rng& rng) {
    DiscriminatorParams d;
    d.sensors = sensors;
    d.features = features;
    d.hidden = hidden;
    d.net = Mlp({sensors * features, hidden, hidden, 2});
    d.net.init(rng);
    return d;
}

std::array<double, 2> DiscriminatorParams::classify(const Mat& frame) const {
    const std::vector<double> logits = net.forward(flatten(frame));
    return softmax2(logits[0], logits[1]);
}

double alignment_loss(const std::vector<Mat>& transformed, const Prototype& proto) {
    if (transformed.empty()) throw DataError("alignment_loss: empty batch");
    double total = 0.0;
    const double per_frame = 1.0 / static_cast<double>(proto.values.size());
    for (const Mat& x : transformed) {
        if (!x.same_shape(proto.values))
            throw std::invalid_argument("alignment_loss: frame shape differs from prototype");
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - proto.values[i]);
        total += s * per_frame;
    }
    return total / static_cast<double>(transformed.size());
}

double discriminator_loss(const DiscriminatorParams& d, const std::vector<LabeledFrame>& batch) {
    return discriminator_loss_grad(d, batch, nullptr);
}

double discriminator_loss_grad(const DiscriminatorParams& d,
                               const std::vector<LabeledFrame>& batch,
                               std::vector<double>* grad) {
    if (batch.empty()) throw DataError("discriminator_loss: empty batch");
    if (grad) grad->assign(d.net.param_count(), 0.0);
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const LabeledFrame& lf : batch) {
        Mlp::Cache cache;
        const std::vector<double> logits = d.net.forward(flatten(lf.values), cache);
        double d0 = 0.0, d1 = 0.0;
        total += nll2(logits[0], logits[1], lf.label, grad ? &d0 : nullptr, grad ? &d1 : nullptr);
        if (grad) {
            const std::vector<double> dy{d0 * inv, d1 * inv};
            d.net.backward(cache, dy, *grad);
        }
    }
    return total * inv;
}

double generator_total_loss(double align, double disc_server, double disc_client,
                            double lambda1, double lambda2) {
    return align - lambda1 * disc_server - lambda2 * disc_client;
}

GeneratorLossParts generator_loss(const GeneratorParams& gen, const TransformBundle& tb,
                                  const GeneratorBatch& batch, std::vector<double>* grad) {
    if (batch.raw.empty()) throw DataError("generator_loss: empty batch");
    if (batch.align_target == nullptr)
        throw std::invalid_argument("generator_loss: alignment target required");
    const std::size_t n = batch.raw.size();
    const std::size_t out_size = gen.dst_sensors * gen.features;
    if (grad) grad->assign(gen.param_count(), 0.0);

    // Forward all three branches per raw frame, keeping caches for backprop.
    struct FrameFwd {
        Mlp::Cache c_net, c_proto, c_direct;
        Mat transformed;
    };
    std::vector<FrameFwd> fwd(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Mat& x = batch.raw[i];
        const Mat net_in = matmul(tb.a_net, x);
        const Mat proto_in = matmul(tb.a_proto, x);
        const auto y1 = gen.net_branch.forward(flatten(net_in), fwd[i].c_net);
        const auto y2 = gen.proto_branch.forward(flatten(proto_in), fwd[i].c_proto);
        const auto y3 = gen.direct_branch.forward(flatten(x), fwd[i].c_direct);
        Mat t(gen.dst_sensors, gen.features);
        for (std::size_t j = 0; j < out_size; ++j) t[j] = y1[j] + y2[j] + y3[j];
        fwd[i].transformed = std::move(t);
    }

    GeneratorLossParts parts;
    std::vector<std::vector<double>> d_transformed(
        grad ? n : 0, std::vector<double>(grad ? out_size : 0, 0.0));

    // Alignment term.
    {
        const Mat& proto = batch.align_target->values;
        const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(out_size));
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Mat& t = fwd[i].transformed;
            for (std::size_t j = 0; j < out_size; ++j) {
                const double e = t[j] - proto[j];
                s += std::abs(e);
                if (grad) d_transformed[i][j] += sign_of(e) * scale;
            }
        }
        parts.alignment = s * scale;
    }

    // Adversarial terms: the loss value covers the whole mixed batch, the
    // gradient flows only through the transformed samples.
    auto adversarial = [&](const DiscriminatorParams* disc, const std::vector<Mat>& counterpart,
                           double lambda) {
        if (disc == nullptr || lambda == 0.0) return 0.0;
        const std::size_t mixed = n + counterpart.size();
        const double inv = 1.0 / static_cast<double>(mixed);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Mlp::Cache cache;
            const auto logits = disc->net.forward(flatten(fwd[i].transformed), cache);
            double d0 = 0.0, d1 = 0.0;
            total += nll2(logits[0], logits[1], 0, grad ? &d0 : nullptr, grad ? &d1 : nullptr);
            if (grad) {
                // minus lambda: the generator ascends the discriminator loss.
                const std::vector<double> dy{-lambda * inv * d0, -lambda * inv * d1};
                std::vector<double> disc_scratch(disc->net.param_count(), 0.0);
                const std::vector<double> dx = disc->net.backward(cache, dy, disc_scratch);
                for (std::size_t j = 0; j < out_size; ++j) d_transformed[i][j] += dx[j];
            }
        }
        for (const Mat& c : counterpart) {
            const auto logits = disc->net.forward(flatten(c));
            total += nll2(logits[0], logits[1], 1);
        }
        return total * inv;
    };

    parts.disc_server = adversarial(batch.disc_server, batch.server_counterpart, batch.lambda1);
    parts.disc_client = adversarial(batch.disc_client, batch.client_counterpart, batch.lambda2);
    parts.total = generator_total_loss(parts.alignment, parts.disc_server, parts.disc_client,
                                       batch.lambda1, batch.lambda2);

    if (grad) {
        const std::size_t n_net = gen.net_branch.param_count();
        const std::size_t n_proto = gen.proto_branch.param_count();
        std::vector<double> g_net(n_net, 0.0);
        std::vector<double> g_proto(n_proto, 0.0);
        std::vector<double> g_direct(gen.direct_branch.param_count(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            gen.net_branch.backward(fwd[i].c_net, d_transformed[i], g_net);
            gen.proto_branch.backward(fwd[i].c_proto, d_transformed[i], g_proto);
            gen.direct_branch.backward(fwd[i].c_direct, d_transformed[i], g_direct);
        }
        std::copy(g_net.begin(), g_net.end(), grad->begin());
        std::copy(g_proto.begin(), g_proto.end(), grad->begin() + n_net);
        std::copy(g_direct.begin(), g_direct.end(), grad->begin() + n_net + n_proto);
    }
    return parts;
}

GeneratorLossParts train_step_generator(GeneratorParams& gen, const TransformBundle& tb,
                                        const GeneratorBatch& batch, double step) {
    std::vector<double> grad;
    const GeneratorLossParts parts = generator_loss(gen, tb, batch, &grad);
    for (double g : grad)
        if (!std::isfinite(g)) throw TrainingError("train_step_generator: non-finite gradient");
    std::vector<double> packed = gen.pack();
    for (std::size_t i = 0; i < packed.size(); ++i) packed[i] -= step * grad[i];
    gen.unpack(packed);
    return parts;
}

double train_step_discriminator(DiscriminatorParams& d, const std::vector<LabeledFrame>& batch,
                                double step) {
    std::vector<double> grad;
    const double loss = discriminator_loss_grad(d, batch, &grad);
    for (double g : grad)
        if (!std::isfinite(g)) throw TrainingError("train_step_discriminator: non-finite gradient");
    for (std::size_t i = 0; i < grad.size(); ++i) d.net.params[i] -= step * grad[i];
    return loss;
}

}  // namespace fedtt
