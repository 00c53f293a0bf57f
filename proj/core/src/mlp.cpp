#include "fedtt/mlp.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace fedtt {

Mlp::Mlp(std::vector<std::size_t> layer_dims) : dims(std::move(layer_dims)) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) total += dims[l + 1] * dims[l] + dims[l + 1];
    params.assign(total, 0.0);
}

void Mlp::init(Rng& rng) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l];
        const std::size_t rows = dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < rows * fan_in + rows; ++i)
            params[off + i] = rng.uniform(-bound, bound);
        off += rows * fan_in + rows;
    }
}

std::size_t Mlp::layer_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += dims[l + 1] * dims[l] + dims[l + 1];
    return off;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
    Cache scratch;
    return forward(x, scratch);
}

std::vector<double> Mlp::forward(std::span<const double> x, Cache& cache) const {
    if (x.size() != dims.front()) {
        std::ostringstream os;
        os << "Mlp::forward: input size " << x.size() << " != " << dims.front();
        throw std::invalid_argument(os.str());
    }
    cache.acts.assign(dims.size(), {});
    cache.acts[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        const double* w = params.data() + off;
        const double* b = params.data() + off + out * in;
        const std::vector<double>& a = cache.acts[l];
        std::vector<double> y(out);
        for (std::size_t i = 0; i < out; ++i) {
            double s = b[i];
            const double* wr = w + i * in;
            for (std::size_t j = 0; j < in; ++j) s += wr[j] * a[j];
            y[i] = s;
        }
        const bool last = (l + 2 == dims.size());
        if (!last)
            for (double& v : y) v = std::tanh(v);
        cache.acts[l + 1] = std::move(y);
        off += out * in + out;
    }
    return cache.acts.back();
}

std::vector<double> Mlp::backward(const Cache& cache, std::span<const double> dy,
                                  std::vector<double>& dparams) const {
    if (dparams.size() != params.size())
        throw std::invalid_argument("Mlp::backward: dparams not presized");
    std::vector<double> delta(dy.begin(), dy.end());
    for (std::size_t l = dims.size() - 1; l-- > 0;) {
        const std::size_t in = dims[l], out = dims[l + 1];
        const std::size_t off = layer_offset(l);
        const double* w = params.data() + off;
        double* dw = dparams.data() + off;
        double* db = dparams.data() + off + out * in;
        const std::vector<double>& a = cache.acts[l];

        for (std::size_t i = 0; i < out; ++i) {
            const double d = delta[i];
            db[i] += d;
            double* dwr = dw + i * in;
            for (std::size_t j = 0; j < in; ++j) dwr[j] += d * a[j];
        }
        std::vector<double> dx(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double d = delta[i];
            const double* wr = w + i * in;
            for (std::size_t j = 0; j < in; ++j) dx[j] += wr[j] * d;
        }
        if (l > 0) {
            // cache.acts[l] holds tanh outputs; derivative is 1 - a^2.
            for (std::size_t j = 0; j < in; ++j) dx[j] *= 1.0 - a[j] * a[j];
        }
        delta = std::move(dx);
    }
    return delta;
}

std::array<double, 2> softmax2(double logit0, double logit1) {
    const double m = std::max(logit0, logit1);
    const double e0 = std::exp(logit0 - m);
    const double e1 = std::exp(logit1 - m);
    const double z = e0 + e1;
    return {e0 / z, e1 / z};
}

double nll2(double logit0, double logit1, int true_class, double* dlogit0, double* dlogit1) {
    const auto p = softmax2(logit0, logit1);
    const double pt = true_class == 0 ? p[0] : p[1];
    const double loss = -std::log(std::max(pt, 1e-300));
    if (dlogit0) *dlogit0 = p[0] - (true_class == 0 ? 1.0 : 0.0);
    if (dlogit1) *dlogit1 = p[1] - (true_class == 1 ? 1.0 : 0.0);
    return loss;
}

namespace {

void check_finite_loss(double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch;
        throw TrainingError(os.str());
    }
}

TrainTrace descend_gd(std::vector<double>& params, const LossFn& fn, const OptConfig& opt,
                      std::size_t epochs) {
    TrainTrace trace;
    std::vector<double> grad(params.size());
    double step = opt.step;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = fn(params, &grad);
        if (epoch == 0) trace.initial_loss = loss;
        check_finite_loss(loss, epoch);
        if (!opt.line_search) {
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
            const double after = fn(params, nullptr);
            check_finite_loss(after, epoch);
            trace.losses.push_back(after);
            continue;
        }
        std::vector<double> candidate(params.size());
        double accepted = loss;
        bool moved = false;
        for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
            for (std::size_t i = 0; i < params.size(); ++i)
                candidate[i] = params[i] - step * grad[i];
            const double cand_loss = fn(candidate, nullptr);
            if (std::isfinite(cand_loss) && cand_loss <= loss) {
                params.swap(candidate);
                accepted = cand_loss;
                moved = true;
                break;
            }
            step *= opt.shrink;
        }
        if (moved) step *= opt.grow;
        trace.losses.push_back(accepted);
    }
    return trace;
}

TrainTrace descend_adam(std::vector<double>& params, const LossFn& fn, const OptConfig& opt,
                        std::size_t epochs) {
    TrainTrace trace;
    std::vector<double> grad(params.size());
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = fn(params, &grad);
        if (epoch == 0) trace.initial_loss = loss;
        check_finite_loss(loss, epoch);
        const double t = static_cast<double>(epoch + 1);
        const double bc1 = 1.0 - std::pow(opt.adam_beta1, t);
        const double bc2 = 1.0 - std::pow(opt.adam_beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = opt.adam_beta1 * m[i] + (1.0 - opt.adam_beta1) * grad[i];
            v[i] = opt.adam_beta2 * v[i] + (1.0 - opt.adam_beta2) * grad[i] * grad[i];
            params[i] -= opt.step * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.adam_eps);
        }
        trace.losses.push_back(loss);
    }
    return trace;
}

}  // namespace

TrainTrace descend(std::vector<double>& params, const LossFn& fn, const OptConfig& opt) {
    if (opt.epochs == 0) {
        TrainTrace trace;
        trace.initial_loss = fn(params, nullptr);
        return trace;
    }
    if (opt.algo == OptConfig::Algo::line_search_gd)
        return descend_gd(params, fn, opt, opt.epochs);

    const std::size_t polish = std::min(opt.polish_steps, opt.epochs / 4);
    TrainTrace trace = descend_adam(params, fn, opt, opt.epochs - polish);
    if (polish > 0) {
        OptConfig gd = opt;
        gd.algo = OptConfig::Algo::line_search_gd;
        gd.step = 0.02;
        gd.line_search = true;
        const TrainTrace tail = descend_gd(params, fn, gd, polish);
        trace.losses.insert(trace.losses.end(), tail.losses.begin(), tail.losses.end());
        if (trace.losses.empty()) trace.initial_loss = tail.initial_loss;
    }
    return trace;
}

}  // namespace fedtt
