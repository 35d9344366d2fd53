#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dowser/checkpoint.hpp"

namespace dowser {

// Deterministic uniform double in [-r, r) from a seeded engine. The mapping
// from raw 64-bit draws is explicit so results do not depend on library
// distribution internals.
inline double uniform_symmetric(std::mt19937_64& rng, double r) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
    return (2.0 * u - 1.0) * r;
}

// Fully connected feed-forward stack: rectifier on hidden layers, identity on
// the output layer. Weights are row-major (out x in), doubles throughout.
struct MlpParams {
    std::vector<std::size_t> dims;              // [in, h1, ..., out]
    std::vector<std::vector<double>> weights;   // per layer, out*in row-major
    std::vector<std::vector<double>> biases;    // per layer, out

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return dims.front(); }
    std::size_t output_dim() const { return dims.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += weights[l].size() + biases[l].size();
        return n;
    }

    // Glorot-style uniform init: r = sqrt(6 / (fan_in + fan_out)). Hidden
    // biases start slightly positive to keep rectifier units alive; output
    // biases start tiny but nonzero so a fully dead hidden layer still yields
    // a normalizable output.
    static MlpParams init(std::vector<std::size_t> layer_dims, std::mt19937_64& rng) {
        if (layer_dims.size() < 2)
            throw std::invalid_argument("mlp needs at least input and output dims");
        MlpParams p;
        p.dims = std::move(layer_dims);
        for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
            std::size_t fan_in = p.dims[l], fan_out = p.dims[l + 1];
            bool is_output = (l + 2 == p.dims.size());
            double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::vector<double> w(fan_in * fan_out);
            for (auto& x : w) x = uniform_symmetric(rng, r);
            std::vector<double> b(fan_out, is_output ? 0.01 : 0.1);
            p.weights.push_back(std::move(w));
            p.biases.push_back(std::move(b));
        }
        return p;
    }

    static MlpParams zeros(std::vector<std::size_t> layer_dims) {
        MlpParams p;
        p.dims = std::move(layer_dims);
        for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
            p.weights.emplace_back(p.dims[l] * p.dims[l + 1], 0.0);
            p.biases.emplace_back(p.dims[l + 1], 0.0);
        }
        return p;
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (auto& w : weights[l]) fn(w);
            for (auto& b : biases[l]) fn(b);
        }
    }

    void save_into(checkpoint::Writer& w) const {
        w.u64(dims.size());
        for (auto d : dims) w.u64(d);
        for (std::size_t l = 0; l < weights.size(); ++l) {
            w.f64_vec(weights[l]);
            w.f64_vec(biases[l]);
        }
    }

    static MlpParams load_from(checkpoint::Reader& r) {
        MlpParams p;
        std::uint64_t n = r.u64();
        p.dims.resize(n);
        for (auto& d : p.dims) d = r.u64();
        for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
            p.weights.push_back(r.f64_vec());
            p.biases.push_back(r.f64_vec());
        }
        return p;
    }
};

// Per-layer activation cache captured on the forward pass and consumed by
// backward(). activations[0] is the input, activations.back() the output.
struct MlpCache {
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> pre_activations;
};

// Gradients with the same shapes as MlpParams.
struct MlpGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static MlpGrads zeros_like(const MlpParams& p) {
        MlpGrads g;
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            g.weights.emplace_back(p.weights[l].size(), 0.0);
            g.biases.emplace_back(p.biases[l].size(), 0.0);
        }
        return g;
    }

    void accumulate(const MlpGrads& other, double scale = 1.0) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].size(); ++i)
                weights[l][i] += scale * other.weights[l][i];
            for (std::size_t i = 0; i < biases[l].size(); ++i)
                biases[l][i] += scale * other.biases[l][i];
        }
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (auto& w : weights[l]) fn(w);
            for (auto& b : biases[l]) fn(b);
        }
    }
};

inline std::vector<double> mlp_forward(const MlpParams& p,
                                       std::span<const double> input,
                                       MlpCache* cache = nullptr) {
    if (input.size() != p.input_dim())
        throw std::invalid_argument("mlp input dimension mismatch: got " +
                                    std::to_string(input.size()) + ", want " +
                                    std::to_string(p.input_dim()));
    std::vector<double> a(input.begin(), input.end());
    if (cache) {
        cache->activations.clear();
        cache->pre_activations.clear();
        cache->activations.push_back(a);
    }
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        std::size_t in = p.dims[l], out = p.dims[l + 1];
        std::vector<double> z(out);
        const auto& W = p.weights[l];
        const auto& b = p.biases[l];
        for (std::size_t o = 0; o < out; ++o) {
            double s = b[o];
            const double* row = W.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
            z[o] = s;
        }
        if (cache) cache->pre_activations.push_back(z);
        bool hidden = (l + 1 < p.layer_count());
        if (hidden)
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

// Backpropagates d(loss)/d(output) through the cached forward pass. Returns
// d(loss)/d(input); fills `grads`.
inline std::vector<double> mlp_backward(const MlpParams& p, const MlpCache& cache,
                                        std::span<const double> dout,
                                        MlpGrads& grads) {
    std::size_t L = p.layer_count();
    std::vector<double> delta(dout.begin(), dout.end());
    for (std::size_t li = L; li-- > 0;) {
        std::size_t in = p.dims[li], out = p.dims[li + 1];
        bool hidden = (li + 1 < L);
        if (hidden) {
            const auto& z = cache.pre_activations[li];
            for (std::size_t o = 0; o < out; ++o)
                if (z[o] <= 0.0) delta[o] = 0.0;
        }
        const auto& a_in = cache.activations[li];
        auto& gW = grads.weights[li];
        auto& gb = grads.biases[li];
        for (std::size_t o = 0; o < out; ++o) {
            gb[o] += delta[o];
            double* grow = gW.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) grow[i] += delta[o] * a_in[i];
        }
        std::vector<double> dprev(in, 0.0);
        const auto& W = p.weights[li];
        for (std::size_t o = 0; o < out; ++o) {
            const double* row = W.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dprev[i] += row[i] * delta[o];
        }
        delta = std::move(dprev);
    }
    return delta;
}

inline void sgd_step(MlpParams& p, const MlpGrads& g, double learning_rate) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (std::size_t i = 0; i < p.weights[l].size(); ++i)
            p.weights[l][i] -= learning_rate * g.weights[l][i];
        for (std::size_t i = 0; i < p.biases[l].size(); ++i)
            p.biases[l][i] -= learning_rate * g.biases[l][i];
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically stable binary cross-entropy on the logit scale:
// bce(z, y) = max(z,0) - z*y + log(1+exp(-|z|)).
inline double bce_with_logit(double logit, double label) {
    double a = logit > 0.0 ? logit : 0.0;
    return a - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

// d(bce)/d(logit) = sigmoid(logit) - label
inline double bce_logit_grad(double logit, double label) {
    return sigmoid(logit) - label;
}

}  // namespace dowser
