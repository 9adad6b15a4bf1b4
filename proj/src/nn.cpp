#include "fdsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "fdsim/rng.hpp"

namespace fdsim::nn {

bool LogitVector::valid(double tol) const {
    if (probs.empty()) return false;
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

std::size_t ModelWeights::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.w.size() + l.b.size();
    return n;
}

bool ModelWeights::finite() const {
    for (const Layer& l : layers) {
        for (double v : l.w)
            if (!std::isfinite(v)) return false;
        for (double v : l.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

static void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw DimensionError("model needs at least input and output dims");
    for (std::size_t d : dims)
        if (d == 0) throw DimensionError("zero-sized layer dimension");
}

ModelWeights zero_weights(const std::vector<std::size_t>& dims, Activation act) {
    check_dims(dims);
    ModelWeights w;
    w.dims = dims;
    w.hidden_activation = act;
    for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
        Layer l;
        l.in_dim = dims[t];
        l.out_dim = dims[t + 1];
        l.w.assign(l.in_dim * l.out_dim, 0.0);
        l.b.assign(l.out_dim, 0.0);
        w.layers.push_back(std::move(l));
    }
    return w;
}

ModelWeights init_weights(const std::vector<std::size_t>& dims, std::uint64_t seed, Activation act) {
    ModelWeights w = zero_weights(dims, act);
    auto g = rng::make_stream(seed, {0x1417u});
    for (Layer& l : w.layers) {
        double r = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
        for (double& v : l.w) v = rng::uniform(g, -r, r);
        // biases start at zero
    }
    return w;
}

std::vector<double> flatten(const ModelWeights& w) {
    std::vector<double> out;
    out.reserve(w.param_count());
    for (const Layer& l : w.layers) {
        out.insert(out.end(), l.w.begin(), l.w.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
    return out;
}

ModelWeights unflatten(const std::vector<std::size_t>& dims, std::span<const double> params,
                       Activation act) {
    ModelWeights w = zero_weights(dims, act);
    if (params.size() != w.param_count()) {
        std::ostringstream msg;
        msg << "unflatten: expected " << w.param_count() << " parameters, got " << params.size();
        throw DimensionError(msg.str());
    }
    std::size_t at = 0;
    for (Layer& l : w.layers) {
        std::copy(params.begin() + at, params.begin() + at + l.w.size(), l.w.begin());
        at += l.w.size();
        std::copy(params.begin() + at, params.begin() + at + l.b.size(), l.b.begin());
        at += l.b.size();
    }
    return w;
}

void save_weights(const ModelWeights& w, std::ostream& out) {
    out << "fdsim-weights 1\n";
    out << (w.hidden_activation == Activation::ReLU ? "relu" : "tanh") << "\n";
    out << w.dims.size();
    for (std::size_t d : w.dims) out << ' ' << d;
    out << "\n";
    out.precision(17);
    for (double v : flatten(w)) out << v << "\n";
}

ModelWeights load_weights(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "fdsim-weights" || version != 1)
        throw Error("load_weights: bad header");
    std::string act_name;
    in >> act_name;
    Activation act = act_name == "tanh" ? Activation::Tanh : Activation::ReLU;
    std::size_t ndims = 0;
    in >> ndims;
    std::vector<std::size_t> dims(ndims);
    for (auto& d : dims) in >> d;
    ModelWeights shape = zero_weights(dims, act);
    std::vector<double> params(shape.param_count());
    for (double& v : params) {
        if (!(in >> v)) throw Error("load_weights: truncated parameter list");
    }
    return unflatten(dims, params, act);
}

static double activate(double z, Activation act) {
    switch (act) {
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
    }
    return z;
}

static double activate_prime(double z, Activation act) {
    switch (act) {
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

static void softmax_inplace(std::vector<double>& z) {
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

// Shared forward pass. When ws is given, per-layer activations and pre-
// activations are retained for the backward pass.
static void forward_impl(const ModelWeights& w, std::span<const double> x, GradWorkspace* ws,
                         std::vector<double>& out) {
    if (x.size() != w.input_dim()) {
        std::ostringstream msg;
        msg << "forward: layer 0 expects input of size " << w.input_dim() << ", got " << x.size();
        throw DimensionError(msg.str());
    }
    const std::size_t T = w.layers.size();
    if (ws) {
        ws->acts.resize(T + 1);
        ws->zs.resize(T);
        ws->acts[0].assign(x.begin(), x.end());
    }
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t t = 0; t < T; ++t) {
        const Layer& l = w.layers[t];
        if (cur.size() != l.in_dim) {
            std::ostringstream msg;
            msg << "forward: layer " << t << " expects input of size " << l.in_dim << ", got "
                << cur.size();
            throw DimensionError(msg.str());
        }
        next.assign(l.out_dim, 0.0);
        for (std::size_t o = 0; o < l.out_dim; ++o) {
            const double* row = l.w.data() + o * l.in_dim;
            double z = l.b[o];
            for (std::size_t i = 0; i < l.in_dim; ++i) z += row[i] * cur[i];
            next[o] = z;
        }
        if (ws) ws->zs[t] = next;
        if (t + 1 < T) {
            for (double& v : next) v = activate(v, w.hidden_activation);
        } else {
            softmax_inplace(next);
        }
        if (ws) ws->acts[t + 1] = next;
        cur.swap(next);
    }
    out = std::move(cur);
}

LogitVector forward(const ModelWeights& w, std::span<const double> features) {
    LogitVector lv;
    forward_impl(w, features, nullptr, lv.probs);
    return lv;
}

void forward_into(const ModelWeights& w, std::span<const double> features, GradWorkspace& ws) {
    forward_impl(w, features, nullptr, ws.output.probs);
}

double cross_entropy(const LogitVector& pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        std::ostringstream msg;
        msg << "cross_entropy: length mismatch, pred " << pred.size() << " vs target "
            << target.size();
        throw DimensionError(msg.str());
    }
    double loss = 0.0;
    for (std::size_t l = 0; l < target.size(); ++l)
        loss -= target[l] * std::log(pred.probs[l] + kLogEpsilon);
    // log(1 + eps) > 0 can push a perfect prediction a hair below zero.
    return std::max(0.0, loss);
}

void fd_loss_gradient_into(const ModelWeights& w, const Sample& b, const LogitVector* teacher,
                           double gamma, GradWorkspace& ws) {
    const std::size_t L = w.num_labels();
    if (b.label < 0 || static_cast<std::size_t>(b.label) >= L)
        throw DimensionError("fd_loss_gradient: label out of range");
    if (teacher && teacher->size() != L)
        throw DimensionError("fd_loss_gradient: teacher length mismatch");

    forward_impl(w, b.features, &ws, ws.output.probs);
    const std::vector<double>& p = ws.output.probs;

    // Combined target weight: one-hot(y_b) + gamma * teacher. The loss is
    // -sum_l t[l] * log(p[l] + eps); accounting for eps keeps the analytic
    // gradient exact, not just eps-close.
    ws.target.assign(L, 0.0);
    ws.target[static_cast<std::size_t>(b.label)] = 1.0;
    if (teacher) {
        for (std::size_t l = 0; l < L; ++l) ws.target[l] += gamma * teacher->probs[l];
    }
    double gsum = 0.0;
    ws.delta.assign(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        double gl = ws.target[l] * p[l] / (p[l] + kLogEpsilon);
        ws.delta[l] = -gl;
        gsum += gl;
    }
    for (std::size_t l = 0; l < L; ++l) ws.delta[l] += p[l] * gsum;

    // Backward pass; ws.delta holds dLoss/dz of the layer being processed.
    if (ws.grad.dims != w.dims || ws.grad.hidden_activation != w.hidden_activation)
        ws.grad = zero_weights(w.dims, w.hidden_activation);
    for (std::size_t t = w.layers.size(); t-- > 0;) {
        const Layer& l = w.layers[t];
        Layer& gl = ws.grad.layers[t];
        const std::vector<double>& a_prev = ws.acts[t];
        for (std::size_t o = 0; o < l.out_dim; ++o) {
            double d = ws.delta[o];
            gl.b[o] = d;
            double* grow = gl.w.data() + o * l.in_dim;
            for (std::size_t i = 0; i < l.in_dim; ++i) grow[i] = d * a_prev[i];
        }
        if (t == 0) break;
        ws.delta_prev.assign(l.in_dim, 0.0);
        for (std::size_t o = 0; o < l.out_dim; ++o) {
            double d = ws.delta[o];
            const double* row = l.w.data() + o * l.in_dim;
            for (std::size_t i = 0; i < l.in_dim; ++i) ws.delta_prev[i] += d * row[i];
        }
        const std::vector<double>& z_prev = ws.zs[t - 1];
        for (std::size_t i = 0; i < l.in_dim; ++i)
            ws.delta_prev[i] *= activate_prime(z_prev[i], w.hidden_activation);
        ws.delta.swap(ws.delta_prev);
    }
}

ModelWeights fd_loss_gradient(const ModelWeights& w, const Sample& b,
                              const std::optional<LogitVector>& teacher, double gamma) {
    if (gamma < 0.0) throw Error("fd_loss_gradient: gamma must be >= 0");
    GradWorkspace ws;
    fd_loss_gradient_into(w, b, teacher ? &*teacher : nullptr, gamma, ws);
    return ws.grad;
}

void sgd_step_inplace(ModelWeights& w, const ModelWeights& grad, double eta) {
    if (grad.dims != w.dims) throw DimensionError("sgd_step: gradient shape mismatch");
    if (!grad.finite())
        throw DivergenceError(-1, -1, "sgd_step: non-finite gradient");
    for (std::size_t t = 0; t < w.layers.size(); ++t) {
        Layer& wl = w.layers[t];
        const Layer& gl = grad.layers[t];
        for (std::size_t i = 0; i < wl.w.size(); ++i) wl.w[i] -= eta * gl.w[i];
        for (std::size_t i = 0; i < wl.b.size(); ++i) wl.b[i] -= eta * gl.b[i];
    }
}

ModelWeights sgd_step(const ModelWeights& w, const ModelWeights& grad, double eta) {
    if (eta <= 0.0) throw Error("sgd_step: eta must be > 0");
    ModelWeights out = w;
    sgd_step_inplace(out, grad, eta);
    return out;
}

int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double evaluate_accuracy(const ModelWeights& w, std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const Sample& s : samples)
        if (argmax(forward(w, s.features).probs) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<double> per_label_accuracy(const ModelWeights& w, std::span<const Sample> samples,
                                       int num_labels) {
    std::vector<long> correct(num_labels, 0), total(num_labels, 0);
    for (const Sample& s : samples) {
        if (s.label < 0 || s.label >= num_labels) continue;
        ++total[s.label];
        if (argmax(forward(w, s.features).probs) == s.label) ++correct[s.label];
    }
    std::vector<double> acc(num_labels, -1.0);
    for (int l = 0; l < num_labels; ++l)
        if (total[l] > 0) acc[l] = static_cast<double>(correct[l]) / static_cast<double>(total[l]);
    return acc;
}

} // namespace fdsim::nn
