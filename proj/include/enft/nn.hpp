#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "enft/autodiff.hpp"
#include "enft/errors.hpp"
#include "enft/rng.hpp"
#include "enft/tensor.hpp"

namespace enft {

// Composite layers on top of the tape primitives, plus the optimizer and the
// finite-difference harness that keeps every layer honest.

enum class Activation { identity, relu, leaky_relu, sigmoid, tanh };

inline Var activate(Var x, Activation act) {
    switch (act) {
        case Activation::relu: return relu(x);
        case Activation::leaky_relu: return leaky_relu(x);
        case Activation::sigmoid: return sigmoid(x);
        case Activation::tanh: return tanh_v(x);
        case Activation::identity: return x;
    }
    throw ConfigError("unknown activation");
}

inline Var dense_layer(Var x, Var w, Var b, Activation act = Activation::identity) {
    return activate(dense(x, w, b), act);
}

// ---- LSTM ----

// One weight matrix and bias per gate; every gate reads the same
// concatenation [y_{t-1}, x_t], so each matrix is (units + input) x units.
struct LstmVars {
    Var wi, bi;  // input gate
    Var wf, bf;  // forget gate
    Var wg, bg;  // candidate
    Var wo, bo;  // output gate
};

struct LstmStateVar {
    Var y;  // hidden
    Var c;  // cell
};

inline LstmStateVar lstm_cell(Var x, LstmStateVar prev, const LstmVars& p) {
    Var zin = concat(prev.y, x);
    Var i = sigmoid(dense(zin, p.wi, p.bi));
    Var f = sigmoid(dense(zin, p.wf, p.bf));
    Var g = tanh_v(dense(zin, p.wg, p.bg));
    Var o = sigmoid(dense(zin, p.wo, p.bo));
    Var c = add(mul(f, prev.c), mul(i, g));
    Var y = mul(o, tanh_v(c));
    return {y, c};
}

inline LstmStateVar lstm_zero_state(Graph& g, int units) {
    return {g.constant(Tensor({units})), g.constant(Tensor({units}))};
}

// Runs the cell across the sequence from a zero state; returns a state per
// timestep (callers pick hidden outputs or the final state as needed).
inline std::vector<LstmStateVar> lstm_sequence(Graph& g, const std::vector<Var>& xs,
                                               const LstmVars& p, int units) {
    if (xs.empty()) throw ShapeMismatch("recurrent layer needs at least one timestep");
    std::vector<LstmStateVar> states;
    states.reserve(xs.size());
    LstmStateVar s = lstm_zero_state(g, units);
    for (const Var& x : xs) {
        s = lstm_cell(x, s, p);
        states.push_back(s);
    }
    return states;
}

// Forward pass over the sequence and a second pass over the reversed
// sequence; per-timestep output is [fwd_t ; bwd_t], length 2*units.
inline std::vector<Var> bilstm(Graph& g, const std::vector<Var>& xs, const LstmVars& fwd,
                               const LstmVars& bwd, int units) {
    std::vector<LstmStateVar> f_states = lstm_sequence(g, xs, fwd, units);
    std::vector<Var> rev(xs.rbegin(), xs.rend());
    std::vector<LstmStateVar> b_states = lstm_sequence(g, rev, bwd, units);
    const std::size_t T = xs.size();
    std::vector<Var> out;
    out.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
        out.push_back(concat(f_states[t].y, b_states[T - 1 - t].y));
    return out;
}

// ---- attention fusion ----

// Sigmoid-gated fusion of two branch vectors: the concatenation z runs
// through a bottleneck that emits one weight per coordinate, and the output
// is the reweighted z itself.
struct AttentionVars {
    Var w1, b1;  // L -> L, relu
    Var w2, b2;  // L -> floor(L/8), relu
    Var w3, b3;  // floor(L/8) -> L, relu
    Var wg, bg;  // L -> L, sigmoid gate
};

inline Var attention_fuse(Var spatial_vec, Var temporal_vec, const AttentionVars& p) {
    if (spatial_vec.val().numel() < 8 || temporal_vec.val().numel() < 8)
        throw ShapeMismatch("fusion branches must be at least 8 wide");
    Var z = concat(spatial_vec, temporal_vec);
    Var h = relu(dense(z, p.w1, p.b1));
    h = relu(dense(h, p.w2, p.b2));
    h = relu(dense(h, p.w3, p.b3));
    Var w = sigmoid(dense(h, p.wg, p.bg));
    return mul(w, z);
}

// ---- dropout ----

// Pre-drawn inverted mask: entries are 0 with probability rate, otherwise
// 1/(1-rate). Applying the same mask tensor reproduces a forward pass
// exactly, which the finite-difference harness depends on.
inline Tensor dropout_mask(Rng& rng, int len, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidParams("dropout rate must lie in [0,1)");
    Tensor m({len});
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& v : m.v) v = rng.bernoulli(rate) ? 0.0 : keep_scale;
    return m;
}

inline Var dropout(Graph& g, Var x, const Tensor& mask) {
    return mul(x, g.constant(mask));
}

inline Var dropout(Graph& g, Var x, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidParams("dropout rate must lie in [0,1)");
    if (!train || rate == 0.0) return x;  // evaluation mode is the identity
    return dropout(g, x, dropout_mask(rng, static_cast<int>(x.val().numel()), rate));
}

// ---- optimizer ----

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline void zero_grads(std::vector<Parameter>& params) {
    for (auto& p : params) std::fill(p.grad.v.begin(), p.grad.v.end(), 0.0);
}

// Standard bias-corrected Adam; t counts steps from 1. Moments live in the
// parameters, so interleaved models must keep separate parameter sets.
inline void adam_step(std::vector<Parameter>& params, long t, const AdamConfig& cfg = {}) {
    if (t < 1) throw InvalidParams("optimizer step index starts at 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (auto& p : params) {
        for (std::size_t k = 0; k < p.value.v.size(); ++k) {
            const double g = p.grad.v[k];
            p.adam_m.v[k] = cfg.beta1 * p.adam_m.v[k] + (1.0 - cfg.beta1) * g;
            p.adam_v.v[k] = cfg.beta2 * p.adam_v.v[k] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.adam_m.v[k] / bc1;
            const double vhat = p.adam_v.v[k] / bc2;
            p.value.v[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ---- gradient verification ----

// Central finite differences per scalar parameter against one analytic
// backward pass. The builder must reconstruct the identical computation every
// call (fixed inputs, pre-drawn dropout masks), and inputs should keep
// activations away from their kinks. Returns the worst relative error.
inline double grad_check(std::vector<Parameter>& params,
                         const std::function<Var(Graph&)>& build_loss, double step = 1e-4) {
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.emplace_back(p.value.shape);
    {
        Graph g;
        g.backward(build_loss(g), analytic);
    }
    const auto loss_at = [&]() {
        Graph g;
        return build_loss(g).val().v[0];
    };
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::size_t k = 0; k < params[pi].value.v.size(); ++k) {
            double& slot = params[pi].value.v[k];
            const double keep = slot;
            slot = keep + step;
            const double up = loss_at();
            slot = keep - step;
            const double dn = loss_at();
            slot = keep;
            const double numeric = (up - dn) / (2.0 * step);
            const double a = analytic[pi].v[k];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace enft
