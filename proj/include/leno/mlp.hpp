#pragma once
// Fully connected networks with hand-written reverse mode, Adam, and the
// step-decay learning-rate schedule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace leno {

enum class Activation { linear, relu, sigmoid };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& name) {
    for (Activation a : {Activation::linear, Activation::relu, Activation::sigmoid})
        if (name == activation_name(a)) return a;
    throw input_error("unknown activation '" + name + "'");
}

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

struct MlpParams {
    std::vector<DenseLayer> layers;
    Activation hidden = Activation::relu;
    Activation output = Activation::linear;

    int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    int output_size() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

    std::vector<int> sizes() const {
        std::vector<int> s;
        if (layers.empty()) return s;
        s.push_back(input_size());
        for (const auto& l : layers) s.push_back(static_cast<int>(l.weight.rows()));
        return s;
    }

    Eigen::Index num_parameters() const {
        Eigen::Index n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    MlpParams zeros_like() const {
        MlpParams z{layers, hidden, output};
        for (auto& l : z.layers) {
            l.weight.setZero();
            l.bias.setZero();
        }
        return z;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    bool operator==(const MlpParams& o) const {
        if (hidden != o.hidden || output != o.output || layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& a = layers[i];
            const auto& b = o.layers[i];
            if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
            if (a.weight != b.weight || a.bias != b.bias) return false;
        }
        return true;
    }
};

/// Uniform He-style fan-in initialization, zero biases.
inline MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden, Activation output, std::uint64_t seed) {
    if (sizes.size() < 2) throw input_error("make_mlp: need at least input and output sizes");
    for (int s : sizes)
        if (s < 1) throw input_error("make_mlp: layer sizes must be positive");
    std::mt19937_64 rng(seed);
    MlpParams p;
    p.hidden = hidden;
    p.output = output;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const double bound = std::sqrt(6.0 / sizes[l]);
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer layer{Eigen::MatrixXd(sizes[l + 1], sizes[l]), Eigen::VectorXd::Zero(sizes[l + 1])};
        for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
            for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = dist(rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

namespace detail {

inline double sigmoid(double z) {
    // strictly inside (0, 1) even where the exact value rounds to 0 or 1
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::min(std::max(s, lo), hi);
}

inline void activate(Activation a, Eigen::MatrixXd& z) {
    switch (a) {
        case Activation::linear: break;
        case Activation::relu: z = z.cwiseMax(0.0); break;
        case Activation::sigmoid: z = z.unaryExpr([](double v) { return sigmoid(v); }); break;
    }
}

// d(activation)/dz expressed through the activation output
inline void scale_by_derivative(Activation a, const Eigen::MatrixXd& out, Eigen::MatrixXd& adj) {
    switch (a) {
        case Activation::linear: break;
        case Activation::relu: adj = (out.array() > 0.0).select(adj, 0.0); break;
        case Activation::sigmoid: adj = (adj.array() * out.array() * (1.0 - out.array())).matrix(); break;
    }
}

} // namespace detail

/// Post-activation outputs of every layer; activations[0] is the input batch.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;
};

/// Column-batched forward pass: x is input_size x batch.
inline Eigen::MatrixXd forward_batch(const MlpParams& mlp, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr) {
    if (x.rows() != mlp.input_size()) {
        throw input_error("mlp forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                          std::to_string(mlp.input_size()));
    }
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(x);
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        Eigen::MatrixXd z = layer.weight * a;
        z.colwise() += layer.bias;
        detail::activate(l + 1 == mlp.layers.size() ? mlp.output : mlp.hidden, z);
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

inline Eigen::VectorXd forward(const MlpParams& mlp, const Eigen::VectorXd& x) {
    return forward_batch(mlp, Eigen::MatrixXd(x)).col(0);
}

/// Reverse pass. `adj_out` is dL/dy (output_size x batch). Parameter gradients
/// are accumulated into `grads` when it is non-null; returns dL/dx.
inline Eigen::MatrixXd backward_batch(const MlpParams& mlp, const ForwardCache& cache, const Eigen::MatrixXd& adj_out,
                                      MlpParams* grads) {
    const std::size_t nl = mlp.layers.size();
    if (cache.activations.size() != nl + 1) throw input_error("mlp backward: cache does not match network");
    if (adj_out.rows() != mlp.output_size() || adj_out.cols() != cache.activations.back().cols()) {
        throw input_error("mlp backward: adjoint shape does not match network output");
    }
    Eigen::MatrixXd adj = adj_out;
    for (std::size_t l = nl; l-- > 0;) {
        detail::scale_by_derivative(l + 1 == nl ? mlp.output : mlp.hidden, cache.activations[l + 1], adj);
        if (grads) {
            grads->layers[l].weight.noalias() += adj * cache.activations[l].transpose();
            grads->layers[l].bias += adj.rowwise().sum();
        }
        adj = mlp.layers[l].weight.transpose() * adj;
    }
    return adj;
}

/// Gradients of sum_b adj(:,b) . y(:,b) with respect to all parameters.
inline MlpParams grad(const MlpParams& mlp, const Eigen::MatrixXd& x_batch, const Eigen::MatrixXd& loss_adjoint) {
    ForwardCache cache;
    forward_batch(mlp, x_batch, &cache);
    MlpParams g = mlp.zeros_like();
    backward_batch(mlp, cache, loss_adjoint, &g);
    return g;
}

inline Eigen::VectorXd flatten(const MlpParams& p) {
    Eigen::VectorXd out(p.num_parameters());
    Eigen::Index k = 0;
    for (const auto& l : p.layers) {
        out.segment(k, l.weight.size()) = l.weight.reshaped();
        k += l.weight.size();
        out.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
    }
    return out;
}

inline void unflatten(const Eigen::VectorXd& flat, MlpParams& p) {
    if (flat.size() != p.num_parameters()) throw input_error("unflatten: parameter count mismatch");
    Eigen::Index k = 0;
    for (auto& l : p.layers) {
        l.weight.reshaped() = flat.segment(k, l.weight.size());
        k += l.weight.size();
        l.bias = flat.segment(k, l.bias.size());
        k += l.bias.size();
    }
}

struct AdamState {
    Eigen::VectorXd m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam update of a flat parameter vector.
inline void adam_update(Eigen::Ref<Eigen::VectorXd> x, const Eigen::Ref<const Eigen::VectorXd>& g, AdamState& s,
                        double lr) {
    if (!(lr > 0)) throw input_error("adam: learning rate must be positive");
    if (g.size() != x.size() || s.m.size() != x.size()) throw input_error("adam: shape mismatch");
    ++s.step;
    s.m = s.beta1 * s.m + (1 - s.beta1) * g;
    s.v = s.beta2 * s.v + (1 - s.beta2) * g.cwiseAbs2();
    const double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
    x.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr) {
    Eigen::VectorXd x = flatten(params);
    if (state.m.size() == 0 && state.step == 0) state = AdamState(x.size());
    adam_update(x, flatten(grads), state, lr);
    unflatten(x, params);
}

struct LrSchedule {
    double base_lr = 1e-3;
    double decay = 0.5;
    int decay_every = 1000;
    int total_epochs = 5000;
};

inline double lr_at(const LrSchedule& s, int epoch) {
    if (epoch < 0) throw input_error("lr_at: epoch must be nonnegative");
    return s.base_lr * std::pow(s.decay, epoch / s.decay_every);
}

} // namespace leno
