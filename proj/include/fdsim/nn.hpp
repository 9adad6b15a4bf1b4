#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fdsim/error.hpp"

namespace fdsim::nn {

// Softmax-normalized class-probability vector. The payload unit exchanged by
// the distillation protocol.
struct LogitVector {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }

    // Entries in [0,1] and summing to 1 within tol.
    bool valid(double tol = 1e-6) const;
};

struct Sample {
    std::vector<double> features; // pixel values in [0,1]
    int label = 0;
    bool synthetic = false; // true for generator-produced samples
};

// Dense layer, weights stored row-major: w[out * in_dim + in].
struct Layer {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> w;
    std::vector<double> b;
};

enum class Activation { ReLU, Tanh };

// Feedforward classifier weights: hidden activations + softmax output.
// Doubles as the gradient container (congruent layout).
struct ModelWeights {
    std::vector<std::size_t> dims; // input_dim, hidden..., num_labels
    std::vector<Layer> layers;
    Activation hidden_activation = Activation::ReLU;

    std::size_t input_dim() const { return dims.front(); }
    std::size_t num_labels() const { return dims.back(); }
    std::size_t param_count() const;
    bool finite() const;
};

ModelWeights zero_weights(const std::vector<std::size_t>& dims,
                          Activation act = Activation::ReLU);

// Uniform init in [-r, r], r = sqrt(6 / (fan_in + fan_out)).
ModelWeights init_weights(const std::vector<std::size_t>& dims, std::uint64_t seed,
                          Activation act = Activation::ReLU);

// Flat checkpoint form: dimension header + parameter list.
std::vector<double> flatten(const ModelWeights& w);
ModelWeights unflatten(const std::vector<std::size_t>& dims, std::span<const double> params,
                       Activation act = Activation::ReLU);
void save_weights(const ModelWeights& w, std::ostream& out);
ModelWeights load_weights(std::istream& in);

// Softmax output for one input. Deterministic; throws DimensionError naming
// the offending layer on a size mismatch.
LogitVector forward(const ModelWeights& w, std::span<const double> features);

inline constexpr double kLogEpsilon = 1e-12;

// -sum_l target[l] * log(pred[l] + eps). target is a distribution (one-hot
// ground truth or a teacher logit vector).
double cross_entropy(const LogitVector& pred, std::span<const double> target);

// Scratch buffers for the per-sample training loop; reuse across samples to
// keep the hot path allocation-free.
struct GradWorkspace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> zs;
    std::vector<double> delta;
    std::vector<double> delta_prev;
    std::vector<double> target;
    ModelWeights grad;
    LogitVector output;
};

// Analytic gradient of phi(F(w,b), y_b) + gamma * phi(F(w,b), teacher) with
// respect to all weights. The regularizer term is omitted when teacher is
// null. Result lands in ws.grad; ws.output holds F(w,b) from the same pass.
void fd_loss_gradient_into(const ModelWeights& w, const Sample& b,
                           const LogitVector* teacher, double gamma, GradWorkspace& ws);

// forward() variant landing in ws.output, for the training loop.
void forward_into(const ModelWeights& w, std::span<const double> features, GradWorkspace& ws);

ModelWeights fd_loss_gradient(const ModelWeights& w, const Sample& b,
                              const std::optional<LogitVector>& teacher, double gamma);

// w' = w - eta * grad. Throws DivergenceError on a non-finite gradient.
void sgd_step_inplace(ModelWeights& w, const ModelWeights& grad, double eta);
ModelWeights sgd_step(const ModelWeights& w, const ModelWeights& grad, double eta);

// Fraction of samples whose argmax matches the label.
double evaluate_accuracy(const ModelWeights& w, std::span<const Sample> samples);

// Per-label accuracy over samples of each label; labels absent from the set
// get -1 (no data to score).
std::vector<double> per_label_accuracy(const ModelWeights& w, std::span<const Sample> samples,
                                       int num_labels);

int argmax(std::span<const double> v);

} // namespace fdsim::nn
