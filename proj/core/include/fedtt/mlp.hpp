#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedtt/rng.hpp"

namespace fedtt {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fully connected net with tanh hidden activations and a linear output
// layer. Parameters are packed into one flat vector (per layer: W row-major,
// then b) so optimizers and finite-difference probes can treat any model as
// a plain coordinate vector.
struct Mlp {
    std::vector<std::size_t> dims;  // {in, hidden..., out}
    std::vector<double> params;

    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> layer_dims);

    // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per layer
    void init(Rng& rng);

    std::size_t layer_count() const { return dims.empty() ? 0 : dims.size() - 1; }
    std::size_t param_count() const { return params.size(); }
    std::size_t input_dim() const { return dims.front(); }
    std::size_t output_dim() const { return dims.back(); }

    struct Cache {
        std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l] = layer l output
    };

    std::vector<double> forward(std::span<const double> x) const;
    std::vector<double> forward(std::span<const double> x, Cache& cache) const;

    // Backprop for dL/dy. Accumulates parameter gradients into dparams
    // (same packing as params; must be presized) and returns dL/dx.
    std::vector<double> backward(const Cache& cache, std::span<const double> dy,
                                 std::vector<double>& dparams) const;

private:
    std::size_t layer_offset(std::size_t layer) const;
};

// Numerically stable 2-way softmax.
std::array<double, 2> softmax2(double logit0, double logit1);

// -log p(true_class) and its gradient w.r.t. the two logits.
double nll2(double logit0, double logit1, int true_class, double* dlogit0 = nullptr,
            double* dlogit1 = nullptr);

struct OptConfig {
    enum class Algo { line_search_gd, adam };
    Algo algo = Algo::line_search_gd;
    double step = 0.05;  // GD step, or Adam learning rate
    std::size_t epochs = 200;
    bool line_search = true;  // backtracking keeps the per-epoch trace non-increasing
    double shrink = 0.5;
    double grow = 1.3;
    int max_backtracks = 40;
    // Adam tail: the last min(polish_steps, epochs/4) epochs switch to
    // line-search GD, which converges linearly once near an optimum.
    std::size_t polish_steps = 500;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

// Loss callback: fills grad (presized to params.size()) when non-null,
// returns the loss at params.
using LossFn = std::function<double(const std::vector<double>& params, std::vector<double>* grad)>;

struct TrainTrace {
    std::vector<double> losses;  // accepted loss after each epoch
    double initial_loss = 0.0;
    double final_loss() const { return losses.empty() ? initial_loss : losses.back(); }
};

// Full-batch gradient descent with optional backtracking line search.
// Throws TrainingError naming the epoch if the loss turns non-finite.
TrainTrace descend(std::vector<double>& params, const LossFn& fn, const OptConfig& opt);

}  // namespace fedtt
