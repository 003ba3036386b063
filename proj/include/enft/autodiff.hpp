#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "enft/errors.hpp"
#include "enft/tensor.hpp"

namespace enft {

// Reverse-mode differentiation over a per-example tape. Each operation
// appends one node holding its output; walking the tape backwards applies
// each node's accumulation rule. Parameter leaves reference the parameter's
// value tensor in place (weights are never copied into the tape) and deliver
// their gradient into a caller-supplied sink, so several tapes can be
// evaluated against one parameter set and reduced in a fixed order.
class Graph;

struct Var {
    Graph* g = nullptr;
    int id = -1;

    const Tensor& val() const;
};

class Graph {
  public:
    struct Node {
        Tensor own_val;
        const Tensor* ext_val = nullptr;  // set for parameter leaves
        Tensor grad;                      // allocated only when needs_grad
        int param_index = -1;
        bool needs_grad = false;
        std::function<void(Graph&, Node&)> backprop;

        const Tensor& val() const { return ext_val ? *ext_val : own_val; }
    };

    // Constant leaf: gradients stop here.
    Var constant(Tensor t) {
        auto n = std::make_unique<Node>();
        n->own_val = std::move(t);
        return push(std::move(n));
    }

    // Non-differentiable leaf referencing an externally owned tensor (no
    // copy). The referenced tensor must outlive the graph.
    Var constant_ref(const Tensor& t) {
        auto n = std::make_unique<Node>();
        n->ext_val = &t;
        return push(std::move(n));
    }

    // Differentiable leaf bound to an externally owned parameter.
    Var param(const Parameter& p, int index) {
        auto n = std::make_unique<Node>();
        n->ext_val = &p.value;
        n->param_index = index;
        n->needs_grad = true;
        n->grad = Tensor(p.value.shape);
        return push(std::move(n));
    }

    Node& node(int id) { return *nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return *nodes_[static_cast<std::size_t>(id)]; }

    Var make(Tensor value, std::vector<int> inputs,
             std::function<void(Graph&, Node&)> backprop) {
        auto n = std::make_unique<Node>();
        n->own_val = std::move(value);
        for (int i : inputs)
            if (node(i).needs_grad) n->needs_grad = true;
        if (n->needs_grad) {
            n->grad = Tensor(n->own_val.shape);
            n->backprop = std::move(backprop);
        }
        return push(std::move(n));
    }

    // Accumulate into an input's gradient if it participates.
    void add_grad(int id, long flat_index, double g) {
        Node& n = node(id);
        if (n.needs_grad) n.grad.v[static_cast<std::size_t>(flat_index)] += g;
    }
    bool wants_grad(int id) const { return node(id).needs_grad; }

    // Backward from a scalar loss; parameter-leaf gradients are added into
    // sink[param_index], which must be pre-sized and pre-shaped.
    void backward(Var loss, std::vector<Tensor>& sink) {
        run_backward(loss);
        for (const auto& np : nodes_) {
            if (np->param_index >= 0) {
                Tensor& dst = sink[static_cast<std::size_t>(np->param_index)];
                for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += np->grad.v[k];
            }
        }
    }

    // Same walk, delivering straight into each parameter's own grad tensor.
    void backward(Var loss, std::vector<Parameter>& params) {
        run_backward(loss);
        for (const auto& np : nodes_) {
            if (np->param_index >= 0) {
                Tensor& dst = params[static_cast<std::size_t>(np->param_index)].grad;
                for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += np->grad.v[k];
            }
        }
    }

  private:
    void run_backward(Var loss) {
        Node& top = node(loss.id);
        if (top.val().numel() != 1) throw ShapeMismatch("loss must be scalar");
        if (!top.needs_grad) return;  // nothing differentiable below
        top.grad.v[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = node(i);
            if (n.needs_grad && n.backprop) n.backprop(*this, n);
        }
    }

    Var push(std::unique_ptr<Node> n) {
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<std::unique_ptr<Node>> nodes_;
};

inline const Tensor& Var::val() const { return g->node(id).val(); }

// ---- elementwise helpers ----

namespace detail {

template <class Fwd, class Bwd>
Var unary_elementwise(Var x, Fwd fwd, Bwd grad_from_in_out) {
    const Tensor& xv = x.val();
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < xv.v.size(); ++i) out.v[i] = fwd(xv.v[i]);
    const int xid = x.id;
    return x.g->make(std::move(out), {xid},
                     [xid, grad_from_in_out](Graph& g, Graph::Node& n) {
                         const Tensor& xin = g.node(xid).val();
                         for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                             g.add_grad(xid, static_cast<long>(i),
                                        n.grad.v[i] * grad_from_in_out(xin.v[i], n.own_val.v[i]));
                     });
}

}  // namespace detail

inline Var relu(Var x) {
    return detail::unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var x, double slope = 0.01) {
    return detail::unary_elementwise(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

inline Var sigmoid(Var x) {
    return detail::unary_elementwise(
        x,
        [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                       : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double out) { return out * (1.0 - out); });
}

inline Var tanh_v(Var x) {
    return detail::unary_elementwise(x, [](double v) { return std::tanh(v); },
                                     [](double, double out) { return 1.0 - out * out; });
}

inline Var add(Var a, Var b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) throw ShapeMismatch("addition operands differ in shape");
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = av.v[i] + bv.v[i];
    const int ai = a.id, bi = b.id;
    return a.g->make(std::move(out), {ai, bi}, [ai, bi](Graph& g, Graph::Node& n) {
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            g.add_grad(ai, static_cast<long>(i), n.grad.v[i]);
            g.add_grad(bi, static_cast<long>(i), n.grad.v[i]);
        }
    });
}

inline Var mul(Var a, Var b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) throw ShapeMismatch("product operands differ in shape");
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = av.v[i] * bv.v[i];
    const int ai = a.id, bi = b.id;
    return a.g->make(std::move(out), {ai, bi}, [ai, bi](Graph& g, Graph::Node& n) {
        const Tensor& avv = g.node(ai).val();
        const Tensor& bvv = g.node(bi).val();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            g.add_grad(ai, static_cast<long>(i), n.grad.v[i] * bvv.v[i]);
            g.add_grad(bi, static_cast<long>(i), n.grad.v[i] * avv.v[i]);
        }
    });
}

inline Var concat(Var a, Var b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != 1 || bv.rank() != 1) throw ShapeMismatch("concat expects vectors");
    Tensor out({static_cast<int>(av.numel() + bv.numel())});
    std::copy(av.v.begin(), av.v.end(), out.v.begin());
    std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + av.numel());
    const int ai = a.id, bi = b.id;
    const long split = av.numel();
    return a.g->make(std::move(out), {ai, bi}, [ai, bi, split](Graph& g, Graph::Node& n) {
        for (long i = 0; i < split; ++i)
            g.add_grad(ai, i, n.grad.v[static_cast<std::size_t>(i)]);
        for (long i = split; i < static_cast<long>(n.grad.v.size()); ++i)
            g.add_grad(bi, i - split, n.grad.v[static_cast<std::size_t>(i)]);
    });
}

inline Var slice(Var x, int start, int len) {
    const Tensor& xv = x.val();
    if (xv.rank() != 1) throw ShapeMismatch("slice expects a vector");
    if (start < 0 || len <= 0 || start + len > xv.numel())
        throw OutOfBounds("slice range outside the vector");
    Tensor out({len});
    std::copy(xv.v.begin() + start, xv.v.begin() + start + len, out.v.begin());
    const int xi = x.id;
    return x.g->make(std::move(out), {xi}, [xi, start](Graph& g, Graph::Node& n) {
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            g.add_grad(xi, start + static_cast<long>(i), n.grad.v[i]);
    });
}

inline Var flatten(Var x) {
    const Tensor& xv = x.val();
    Tensor out({static_cast<int>(xv.numel())});
    out.v = xv.v;
    const int xi = x.id;
    return x.g->make(std::move(out), {xi}, [xi](Graph& g, Graph::Node& n) {
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            g.add_grad(xi, static_cast<long>(i), n.grad.v[i]);
    });
}

// y = x·W + b for a row vector x (length a), weights a×b, bias b.
inline Var dense(Var x, Var w, Var b) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const Tensor& bv = b.val();
    if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1 || wv.dim(0) != xv.numel() ||
        wv.dim(1) != bv.numel())
        throw ShapeMismatch("dense operand shapes disagree");
    const int a = wv.dim(0), o = wv.dim(1);
    Tensor out({o});
    for (int j = 0; j < o; ++j) out.v[static_cast<std::size_t>(j)] = bv.v[static_cast<std::size_t>(j)];
    for (int i = 0; i < a; ++i) {
        const double xi_v = xv.v[static_cast<std::size_t>(i)];
        const double* wrow = wv.v.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(o);
        for (int j = 0; j < o; ++j) out.v[static_cast<std::size_t>(j)] += xi_v * wrow[j];
    }
    const int xi = x.id, wi = w.id, bi = b.id;
    return x.g->make(std::move(out), {xi, wi, bi}, [xi, wi, bi, a, o](Graph& g, Graph::Node& n) {
        const Tensor& xin = g.node(xi).val();
        const Tensor& win = g.node(wi).val();
        const bool want_x = g.wants_grad(xi);
        const bool want_w = g.wants_grad(wi);
        for (int j = 0; j < o; ++j) g.add_grad(bi, j, n.grad.v[static_cast<std::size_t>(j)]);
        for (int i = 0; i < a; ++i) {
            const double* wrow =
                win.v.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(o);
            const double xv_i = xin.v[static_cast<std::size_t>(i)];
            double acc = 0.0;
            for (int j = 0; j < o; ++j) {
                const double gy = n.grad.v[static_cast<std::size_t>(j)];
                acc += gy * wrow[j];
                if (want_w) g.add_grad(wi, static_cast<long>(i) * o + j, gy * xv_i);
            }
            if (want_x) g.add_grad(xi, i, acc);
        }
    });
}

// Stride-1 cross-correlation with zero same-padding. Input H×W×C, kernels
// k×k×C×F (k odd), bias F, output H×W×F.
inline Var conv2d(Var x, Var w, Var b) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const Tensor& bv = b.val();
    if (xv.rank() != 3 || wv.rank() != 4 || bv.rank() != 1)
        throw ShapeMismatch("convolution operand ranks disagree");
    const int H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    const int k = wv.dim(0), F = wv.dim(3);
    if (wv.dim(1) != k || (k % 2) == 0 || wv.dim(2) != C || bv.numel() != F)
        throw ShapeMismatch("convolution kernel shape disagrees with input");
    const int r = k / 2;

    Tensor out({H, W, F});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int f = 0; f < F; ++f) {
                double acc = bv.v[static_cast<std::size_t>(f)];
                for (int di = 0; di < k; ++di) {
                    const int si = i + di - r;
                    if (si < 0 || si >= H) continue;
                    for (int dj = 0; dj < k; ++dj) {
                        const int sj = j + dj - r;
                        if (sj < 0 || sj >= W) continue;
                        for (int c = 0; c < C; ++c)
                            acc += xv.at3(si, sj, c) * wv.at4(di, dj, c, f);
                    }
                }
                out.at3(i, j, f) = acc;
            }

    const int xi = x.id, wi = w.id, bi = b.id;
    return x.g->make(std::move(out), {xi, wi, bi},
                     [xi, wi, bi, H, W, C, k, F, r](Graph& g, Graph::Node& n) {
                         const Tensor& xin = g.node(xi).val();
                         const Tensor& win = g.node(wi).val();
                         const bool want_x = g.wants_grad(xi);
                         const bool want_w = g.wants_grad(wi);
                         for (int i = 0; i < H; ++i)
                             for (int j = 0; j < W; ++j)
                                 for (int f = 0; f < F; ++f) {
                                     const double gy = n.grad.at3(i, j, f);
                                     if (gy == 0.0) continue;
                                     g.add_grad(bi, f, gy);
                                     for (int di = 0; di < k; ++di) {
                                         const int si = i + di - r;
                                         if (si < 0 || si >= H) continue;
                                         for (int dj = 0; dj < k; ++dj) {
                                             const int sj = j + dj - r;
                                             if (sj < 0 || sj >= W) continue;
                                             for (int c = 0; c < C; ++c) {
                                                 if (want_w)
                                                     g.add_grad(wi,
                                                                ((static_cast<long>(di) * k + dj) * C + c) * F + f,
                                                                gy * xin.at3(si, sj, c));
                                                 if (want_x)
                                                     g.add_grad(xi,
                                                                (static_cast<long>(si) * W + sj) * C + c,
                                                                gy * win.at4(di, dj, c, f));
                                             }
                                         }
                                     }
                                 }
                     });
}

// 2×2/stride-2 max pooling over H×W×C. Floor mode drops an odd trailing
// row/column; ceil mode keeps it as a clipped window. Gradient goes to the
// first-scanned maximum of each window.
inline Var maxpool2d(Var x, bool ceil_mode = false) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeMismatch("pooling expects H x W x C");
    const int H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    if (H < 2 || W < 2) throw ShapeMismatch("pooling needs at least 2x2 input");
    const int Ho = ceil_mode ? (H + 1) / 2 : H / 2;
    const int Wo = ceil_mode ? (W + 1) / 2 : W / 2;

    Tensor out({Ho, Wo, C});
    std::vector<long> argmax(static_cast<std::size_t>(out.numel()));
    for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j)
            for (int c = 0; c < C; ++c) {
                double best = 0.0;
                long best_idx = -1;
                for (int di = 0; di < 2; ++di) {
                    const int si = 2 * i + di;
                    if (si >= H) continue;
                    for (int dj = 0; dj < 2; ++dj) {
                        const int sj = 2 * j + dj;
                        if (sj >= W) continue;
                        const double v = xv.at3(si, sj, c);
                        if (best_idx < 0 || v > best) {
                            best = v;
                            best_idx = (static_cast<long>(si) * W + sj) * C + c;
                        }
                    }
                }
                out.at3(i, j, c) = best;
                argmax[static_cast<std::size_t>((static_cast<long>(i) * Wo + j) * C + c)] =
                    best_idx;
            }

    const int xi = x.id;
    return x.g->make(std::move(out), {xi},
                     [xi, argmax = std::move(argmax)](Graph& g, Graph::Node& n) {
                         for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                             g.add_grad(xi, argmax[i], n.grad.v[i]);
                     });
}

// (x - mean)/sqrt(var + 1e-5) * gain + bias over one vector.
inline Var layer_norm(Var x, Var gain, Var bias) {
    constexpr double eps = 1e-5;
    const Tensor& xv = x.val();
    const Tensor& gv = gain.val();
    const Tensor& bv = bias.val();
    if (xv.rank() != 1 || !xv.same_shape(gv) || !xv.same_shape(bv))
        throw ShapeMismatch("normalization operand shapes disagree");
    const long n_len = xv.numel();
    if (n_len < 2) throw ShapeMismatch("normalization needs at least 2 elements");

    double mean = 0.0;
    for (double v : xv.v) mean += v;
    mean /= static_cast<double>(n_len);
    double var = 0.0;
    for (double v : xv.v) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_len);
    const double inv_std = 1.0 / std::sqrt(var + eps);

    Tensor out(xv.shape);
    for (long i = 0; i < n_len; ++i) {
        const std::size_t s = static_cast<std::size_t>(i);
        out.v[s] = (xv.v[s] - mean) * inv_std * gv.v[s] + bv.v[s];
    }

    const int xi = x.id, gi = gain.id, bi = bias.id;
    return x.g->make(
        std::move(out), {xi, gi, bi},
        [xi, gi, bi, mean, inv_std, n_len](Graph& g, Graph::Node& n) {
            const Tensor& xin = g.node(xi).val();
            const Tensor& gin = g.node(gi).val();
            const double inv_n = 1.0 / static_cast<double>(n_len);
            // gradients through the normalized value xhat
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            std::vector<double> dxhat(static_cast<std::size_t>(n_len));
            for (long i = 0; i < n_len; ++i) {
                const std::size_t s = static_cast<std::size_t>(i);
                const double xhat = (xin.v[s] - mean) * inv_std;
                const double d = n.grad.v[s] * gin.v[s];
                dxhat[s] = d;
                sum_dxhat += d;
                sum_dxhat_xhat += d * xhat;
                g.add_grad(gi, i, n.grad.v[s] * xhat);
                g.add_grad(bi, i, n.grad.v[s]);
            }
            if (!g.wants_grad(xi)) return;
            for (long i = 0; i < n_len; ++i) {
                const std::size_t s = static_cast<std::size_t>(i);
                const double xhat = (xin.v[s] - mean) * inv_std;
                g.add_grad(xi, i,
                           inv_std * (dxhat[s] - inv_n * sum_dxhat - inv_n * xhat * sum_dxhat_xhat));
            }
        });
}

// Numerically stable two-way softmax.
inline Var softmax2(Var logits) {
    const Tensor& lv = logits.val();
    if (lv.rank() != 1 || lv.numel() != 2) throw ShapeMismatch("softmax head expects 2 logits");
    const double m = std::max(lv.v[0], lv.v[1]);
    const double e0 = std::exp(lv.v[0] - m);
    const double e1 = std::exp(lv.v[1] - m);
    Tensor out({2});
    out.v[0] = e0 / (e0 + e1);
    out.v[1] = e1 / (e0 + e1);
    const int li = logits.id;
    return logits.g->make(std::move(out), {li}, [li](Graph& g, Graph::Node& n) {
        const double p0 = n.own_val.v[0], p1 = n.own_val.v[1];
        const double dot = n.grad.v[0] * p0 + n.grad.v[1] * p1;
        g.add_grad(li, 0, p0 * (n.grad.v[0] - dot));
        g.add_grad(li, 1, p1 * (n.grad.v[1] - dot));
    });
}

// -ln(pred[label]) with the probability clamped into [1e-12, 1 - 1e-12].
inline Var bce_loss(Var pred, int label) {
    constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
    const Tensor& pv = pred.val();
    if (pv.rank() != 1 || pv.numel() != 2) throw ShapeMismatch("loss expects a probability pair");
    if (label != 0 && label != 1) throw DataError("label outside {0,1}");
    const double p = std::clamp(pv.v[static_cast<std::size_t>(label)], lo, hi);
    Tensor out({1});
    out.v[0] = -std::log(p);
    const int pi = pred.id;
    return pred.g->make(std::move(out), {pi}, [pi, label](Graph& g, Graph::Node& n) {
        const Tensor& pin = g.node(pi).val();
        const double praw = pin.v[static_cast<std::size_t>(label)];
        if (praw <= lo || praw >= hi) return;  // clamped flat
        g.add_grad(pi, label, -n.grad.v[0] / praw);
    });
}

}  // namespace enft
