#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fedtt/mlp.hpp"
#include "fedtt/traffic.hpp"

namespace fedtt {

// Entrywise mean frame of a series; the representative sample of a city's
// traffic distribution.
struct Prototype {
    Mat values;
};

Prototype compute_prototype(const TrafficSeries& series);

struct TransformFitConfig {
    enum class Init { gaussian, identity };
    Init init = Init::gaussian;
    double init_sigma = 0.01;
    // Adam escapes the flat region around the small-sigma init; the tail of
    // the budget polishes with line-search descent (see OptConfig).
    OptConfig opt{.algo = OptConfig::Algo::adam, .step = 0.02, .epochs = 2000};
    std::uint64_t seed = 1;
};

struct TransformFit {
    Mat transform;    // |M^S| x |M^R|
    double residual;  // Frobenius norm of the final fitting error
    TrainTrace trace;
};

// Residuals achieved when fitting the two precomputed transforms.
struct TransformBundle {
    Mat a_net;    // network transform, |M^S| x |M^R|
    Mat a_proto;  // prototype transform, |M^S| x |M^R|
    double residual_net = 0.0;
    double residual_proto = 0.0;
};

// Least-squares objectives behind the fits; exposed for gradient probes.
// Loss is the squared Frobenius error; `grad` (when non-null) must be sized
// rows*cols of the transform.
double network_transform_loss(const Mat& a, const Mat& adj_src, const Mat& adj_dst,
                              std::vector<double>* grad);
double prototype_transform_loss(const Mat& a, const Mat& proto_src, const Mat& proto_dst,
                                std::vector<double>* grad);

// Fits A in  A * adj_src * A^T = adj_dst  by gradient descent.
TransformFit fit_network_transform(const Mat& adj_src, const Mat& adj_dst,
                                   const TransformFitConfig& cfg);
// Fits A in  A * proto_src = proto_dst.
TransformFit fit_prototype_transform(const Prototype& proto_src, const Prototype& proto_dst,
                                     const TransformFitConfig& cfg);

// Three-branch generator: theta_G(A_net x), theta_P(A_proto x), theta_X(x),
// summed. Each branch is a three-layer dense net with hidden width H.
struct GeneratorParams {
    std::size_t src_sensors = 0;
    std::size_t dst_sensors = 0;
    std::size_t features = 0;
    std::size_t hidden = 0;
    Mlp net_branch;     // S*F1 -> H -> H -> S*F1
    Mlp proto_branch;   // S*F1 -> H -> H -> S*F1
    Mlp direct_branch;  // R*F1 -> H -> H -> S*F1

    static GeneratorParams make(std::size_t src_sensors, std::size_t dst_sensors,
                                std::size_t features, std::size_t hidden, Rng& rng);

    std::size_t param_count() const;
    std::vector<double> pack() const;
    void unpack(std::span<const double> packed);
};

Mat generate(const Mat& frame, const GeneratorParams& gen, const TransformBundle& tb);

// Three-layer MLP over the flattened frame with a 2-way softmax head.
struct DiscriminatorParams {
    std::size_t sensors = 0;
    std::size_t features = 0;
    std::size_t hidden = 0;
    Mlp net;  // S*F1 -> H -> H -> 2

    static DiscriminatorParams make(std::size_t sensors, std::size_t features,
                                    std::size_t hidden, Rng& rng);

    std::array<double, 2> classify(const Mat& frame) const;
};

struct LabeledFrame {
    Mat values;
    int label = 0;  // 0 = transformed/own-transformed, 1 = target-local/aggregated
};

// Mean absolute deviation of the transformed frames from the prototype.
double alignment_loss(const std::vector<Mat>& transformed, const Prototype& proto);

// Mean -log p(true class) over the batch.
double discriminator_loss(const DiscriminatorParams& d, const std::vector<LabeledFrame>& batch);

// alignment - lambda1 * server disc loss - lambda2 * client disc loss.
double generator_total_loss(double align, double disc_server, double disc_client,
                            double lambda1, double lambda2);

// Everything the generator's training step reads. Raw frames are the
// pre-transform source frames; the mixed-batch companions supply the
// discriminator loss values (adversarial gradients flow only through the
// transformed samples).
struct GeneratorBatch {
    std::vector<Mat> raw;         // source frames, |M^R| x F1
    const Prototype* align_target = nullptr;
    const DiscriminatorParams* disc_server = nullptr;  // may be null (term dropped)
    const DiscriminatorParams* disc_client = nullptr;  // may be null (term dropped)
    std::vector<Mat> server_counterpart;  // target-local frames mixed into the server loss
    std::vector<Mat> client_counterpart;  // aggregated frames mixed into the client loss
    double lambda1 = 0.7;
    double lambda2 = 0.4;
};

struct GeneratorLossParts {
    double alignment = 0.0;
    double disc_server = 0.0;
    double disc_client = 0.0;
    double total = 0.0;
};

// Loss (and parameter gradient, when grad != null) of the generator on one
// batch. Exposed for finite-difference verification.
GeneratorLossParts generator_loss(const GeneratorParams& gen, const TransformBundle& tb,
                                  const GeneratorBatch& batch, std::vector<double>* grad);

// Single gradient-descent steps of the alternating scheme.
GeneratorLossParts train_step_generator(GeneratorParams& gen, const TransformBundle& tb,
                                        const GeneratorBatch& batch, double step);
double train_step_discriminator(DiscriminatorParams& d, const std::vector<LabeledFrame>& batch,
                                double step);

// Discriminator loss with parameter gradient, for probes and steps.
double discriminator_loss_grad(const DiscriminatorParams& d,
                               const std::vector<LabeledFrame>& batch,
                               std::vector<double>* grad);

}  // namespace fedtt
