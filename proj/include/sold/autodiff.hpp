// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over Tensor<S>. A Tape owns the
// nodes of one forward build; backward() walks them in reverse creation
// order. backward() can be restricted to the subgraph that reaches a given
// parameter set, which keeps per-task gradient harvesting cheap.

#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

#include "sold/tensor.hpp"

namespace sold::nn {

template <typename S>
struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool has_grad = false;
    bool reach = true;
    std::vector<Node*> parents;
    std::function<void(Node&)> backward;
};

template <typename S>
class Tape;

template <typename S>
struct Var {
    Node<S>* node = nullptr;
    Tape<S>* tape = nullptr;

    const Tensor<S>& val() const { return node->value; }
    const Tensor<S>& grad() const { return node->grad; }
    const std::vector<long>& shape() const { return node->value.shape(); }
};

template <typename S>
class Tape {
public:
    Var<S> leaf(Tensor<S> value) {
        nodes_.push_back(Node<S>{});
        nodes_.back().value = std::move(value);
        return {&nodes_.back(), this};
    }

    Var<S> make(Tensor<S> value, std::vector<Node<S>*> parents, std::function<void(Node<S>&)> bwd) {
        nodes_.push_back(Node<S>{});
        auto& n = nodes_.back();
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backward = std::move(bwd);
        return {&n, this};
    }

    static Tensor<S>& grad_buf(Node<S>* n) {
        if (!n->has_grad) {
            n->grad = Tensor<S>(n->value.shape());
            n->has_grad = true;
        }
        return n->grad;
    }

    // Fills gradients of everything `loss` depends on. When `targets` is
    // given, backward work is pruned to nodes on a loss->target path; grads
    // of other nodes are not meaningful afterwards.
    void backward(Var<S> loss, const std::vector<Node<S>*>* targets = nullptr) {
        if (loss.node->value.numel() != 1) fail(Errc::ShapeMismatch, "backward needs a scalar loss");
        for (auto& n : nodes_) {
            n.has_grad = false;
            n.reach = targets == nullptr;
        }
        if (targets) {
            for (auto* t : *targets) t->reach = true;
            for (auto& n : nodes_)
                if (!n.reach)
                    for (auto* p : n.parents)
                        if (p->reach) {
                            n.reach = true;
                            break;
                        }
        }
        grad_buf(loss.node)[0] = S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (&*it == loss.node) {
                if (it->reach && it->backward) it->backward(*it);
                // nodes created after the loss cannot influence it
                continue;
            }
            if (!it->reach || !it->has_grad || !it->backward) continue;
            it->backward(*it);
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    std::deque<Node<S>> nodes_;
};

namespace ops {

template <typename S>
void accumulate(Node<S>* p, const Tensor<S>& g) {
    auto& buf = Tape<S>::grad_buf(p);
    for (long i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

// ---- arithmetic ----

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
    require_same_shape(a.val(), b.val(), "add");
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] += b.val()[i];
    return a.tape->make(std::move(y), {a.node, b.node}, [a = a.node, b = b.node](Node<S>& self) {
        accumulate(a, self.grad);
        accumulate(b, self.grad);
    });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
    require_same_shape(a.val(), b.val(), "sub");
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] -= b.val()[i];
    return a.tape->make(std::move(y), {a.node, b.node}, [a = a.node, b = b.node](Node<S>& self) {
        accumulate(a, self.grad);
        auto& gb = Tape<S>::grad_buf(b);
        for (long i = 0; i < self.grad.numel(); ++i) gb[i] -= self.grad[i];
    });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
    require_same_shape(a.val(), b.val(), "mul");
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] *= b.val()[i];
    return a.tape->make(std::move(y), {a.node, b.node}, [a = a.node, b = b.node](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        auto& gb = Tape<S>::grad_buf(b);
        for (long i = 0; i < self.grad.numel(); ++i) {
            ga[i] += self.grad[i] * b->value[i];
            gb[i] += self.grad[i] * a->value[i];
        }
    });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] *= c;
    return a.tape->make(std::move(y), {a.node}, [a = a.node, c](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        for (long i = 0; i < self.grad.numel(); ++i) ga[i] += c * self.grad[i];
    });
}

template <typename S>
Var<S> add_scalar(Var<S> a, S c) {
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] += c;
    return a.tape->make(std::move(y), {a.node},
                        [a = a.node](Node<S>& self) { accumulate(a, self.grad); });
}

// y = x * c elementwise with a constant tensor (no gradient into c).
template <typename S>
Var<S> mul_const(Var<S> a, const Tensor<S>& c) {
    require_same_shape(a.val(), c, "mul_const");
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] *= c[i];
    Tensor<S> cc = c;
    return a.tape->make(std::move(y), {a.node}, [a = a.node, cc = std::move(cc)](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        for (long i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i] * cc[i];
    });
}

template <typename S>
Var<S> add_const(Var<S> a, const Tensor<S>& c) {
    require_same_shape(a.val(), c, "add_const");
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] += c[i];
    return a.tape->make(std::move(y), {a.node},
                        [a = a.node](Node<S>& self) { accumulate(a, self.grad); });
}

// Per-leading-index affine with constant coefficients: y[b,...] = s[b]*x[b,...]+t[b].
template <typename S>
Var<S> affine_per_item(Var<S> x, const std::vector<S>& s, const std::vector<S>& t) {
    const long b = x.val().dim(0);
    if (static_cast<long>(s.size()) != b || static_cast<long>(t.size()) != b)
        fail(Errc::ShapeMismatch, "affine_per_item coefficient count");
    const long inner = x.val().numel() / b;
    Tensor<S> y = x.val();
    for (long i = 0; i < b; ++i)
        for (long j = 0; j < inner; ++j) y[i * inner + j] = s[static_cast<size_t>(i)] * y[i * inner + j] + t[static_cast<size_t>(i)];
    return x.tape->make(std::move(y), {x.node}, [x = x.node, s, b, inner](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long i = 0; i < b; ++i)
            for (long j = 0; j < inner; ++j) gx[i * inner + j] += s[static_cast<size_t>(i)] * self.grad[i * inner + j];
    });
}

template <typename S>
Var<S> reshape(Var<S> a, std::vector<long> shape) {
    return a.tape->make(a.val().reshaped(std::move(shape)), {a.node}, [a = a.node](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        for (long i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
    });
}

template <typename S>
Var<S> stop_gradient(Var<S> a) {
    return a.tape->leaf(a.val());
}

// ---- elementwise nonlinearities ----

template <typename S, typename F, typename DF>
Var<S> unary(Var<S> a, F f, DF df) {
    Tensor<S> y = a.val();
    for (long i = 0; i < y.numel(); ++i) y[i] = f(y[i]);
    return a.tape->make(std::move(y), {a.node}, [a = a.node, df](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        for (long i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i] * df(a->value[i]);
    });
}

template <typename S>
Var<S> silu(Var<S> a) {
    auto sig = [](S x) { return S(1) / (S(1) + std::exp(-x)); };
    return unary(
        a, [sig](S x) { return x * sig(x); },
        [sig](S x) {
            S s = sig(x);
            return s * (S(1) + x * (S(1) - s));
        });
}

template <typename S>
Var<S> gelu(Var<S> a) {
    // Exact Gaussian form x*Phi(x).
    auto phi_cdf = [](S x) { return S(0.5) * (S(1) + std::erf(x / S(1.4142135623730951))); };
    auto phi_pdf = [](S x) { return std::exp(S(-0.5) * x * x) * S(0.3989422804014327); };
    return unary(
        a, [phi_cdf](S x) { return x * phi_cdf(x); },
        [phi_cdf, phi_pdf](S x) { return phi_cdf(x) + x * phi_pdf(x); });
}

template <typename S>
Var<S> exp_op(Var<S> a) {
    return unary(a, [](S x) { return std::exp(x); }, [](S x) { return std::exp(x); });
}

template <typename S>
Var<S> erf_op(Var<S> a) {
    return unary(
        a, [](S x) { return std::erf(x); },
        [](S x) { return S(1.1283791670955126) * std::exp(-x * x); });
}

// log(max(x, floor)) — the clamp keeps likelihood terms finite.
template <typename S>
Var<S> log_clamped(Var<S> a, S floor_v) {
    return unary(
        a, [floor_v](S x) { return std::log(x < floor_v ? floor_v : x); },
        [floor_v](S x) { return x < floor_v ? S(0) : S(1) / x; });
}

// ---- linear algebra ----

// y = x @ W + b with x[..., in] flattened over leading dims; W[in, out].
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
    const long in = w.val().dim(0), out = w.val().dim(1);
    if (x.val().dim(x.val().rank() - 1) != in) fail(Errc::ShapeMismatch, "linear: input width");
    if (b.val().numel() != out) fail(Errc::ShapeMismatch, "linear: bias width");
    const long rows = x.val().numel() / in;
    auto out_shape = x.val().shape();
    out_shape.back() = out;
    Tensor<S> y(out_shape);
    gemm_nn(x.val().data(), w.val().data(), y.data(), rows, in, out, false);
    for (long r = 0; r < rows; ++r)
        for (long j = 0; j < out; ++j) y[r * out + j] += b.val()[j];
    return x.tape->make(std::move(y), {x.node, w.node, b.node},
                        [x = x.node, w = w.node, b = b.node, rows, in, out](Node<S>& self) {
                            auto& gx = Tape<S>::grad_buf(x);
                            auto& gw = Tape<S>::grad_buf(w);
                            auto& gb = Tape<S>::grad_buf(b);
                            gemm_nt(self.grad.data(), w->value.data(), gx.data(), rows, out, in, true);
                            gemm_tn(x->value.data(), self.grad.data(), gw.data(), rows, in, out, true);
                            for (long r = 0; r < rows; ++r)
                                for (long j = 0; j < out; ++j) gb[j] += self.grad[r * out + j];
                        });
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
    if (a.val().rank() != 2 || b.val().rank() != 2 || a.val().dim(1) != b.val().dim(0))
        fail(Errc::ShapeMismatch, "matmul");
    const long m = a.val().dim(0), k = a.val().dim(1), n = b.val().dim(1);
    Tensor<S> y({m, n});
    gemm_nn(a.val().data(), b.val().data(), y.data(), m, k, n, false);
    return a.tape->make(std::move(y), {a.node, b.node}, [a = a.node, b = b.node, m, k, n](Node<S>& self) {
        gemm_nt(self.grad.data(), b->value.data(), Tape<S>::grad_buf(a).data(), m, n, k, true);
        gemm_tn(a->value.data(), self.grad.data(), Tape<S>::grad_buf(b).data(), m, k, n, true);
    });
}

// Batched matmul: a[B,m,k] @ b[B,k,n].
template <typename S>
Var<S> bmm(Var<S> a, Var<S> b) {
    if (a.val().rank() != 3 || b.val().rank() != 3 || a.val().dim(0) != b.val().dim(0) ||
        a.val().dim(2) != b.val().dim(1))
        fail(Errc::ShapeMismatch, "bmm");
    const long B = a.val().dim(0), m = a.val().dim(1), k = a.val().dim(2), n = b.val().dim(2);
    Tensor<S> y({B, m, n});
    for (long i = 0; i < B; ++i)
        gemm_nn(a.val().data() + i * m * k, b.val().data() + i * k * n, y.data() + i * m * n, m, k, n, false);
    return a.tape->make(std::move(y), {a.node, b.node}, [a = a.node, b = b.node, B, m, k, n](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        auto& gb = Tape<S>::grad_buf(b);
        for (long i = 0; i < B; ++i) {
            gemm_nt(self.grad.data() + i * m * n, b->value.data() + i * k * n, ga.data() + i * m * k, m, n, k, true);
            gemm_tn(a->value.data() + i * m * k, self.grad.data() + i * m * n, gb.data() + i * k * n, m, k, n, true);
        }
    });
}

template <typename S>
Var<S> transpose12(Var<S> a) {
    if (a.val().rank() != 3) fail(Errc::ShapeMismatch, "transpose12 needs rank 3");
    const long B = a.val().dim(0), m = a.val().dim(1), n = a.val().dim(2);
    Tensor<S> y({B, n, m});
    for (long i = 0; i < B; ++i)
        for (long r = 0; r < m; ++r)
            for (long c = 0; c < n; ++c) y[(i * n + c) * m + r] = a.val()[(i * m + r) * n + c];
    return a.tape->make(std::move(y), {a.node}, [a = a.node, B, m, n](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        for (long i = 0; i < B; ++i)
            for (long r = 0; r < m; ++r)
                for (long c = 0; c < n; ++c) ga[(i * m + r) * n + c] += self.grad[(i * n + c) * m + r];
    });
}

// [B, L, H*D] -> [B*H, L, D]
template <typename S>
Var<S> split_heads(Var<S> x, long heads) {
    const long B = x.val().dim(0), L = x.val().dim(1), C = x.val().dim(2);
    if (C % heads != 0) fail(Errc::ShapeMismatch, "head count must divide channels");
    const long D = C / heads;
    Tensor<S> y({B * heads, L, D});
    for (long b = 0; b < B; ++b)
        for (long l = 0; l < L; ++l)
            for (long h = 0; h < heads; ++h)
                for (long d = 0; d < D; ++d)
                    y[((b * heads + h) * L + l) * D + d] = x.val()[(b * L + l) * C + h * D + d];
    return x.tape->make(std::move(y), {x.node}, [x = x.node, B, L, C, heads, D](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long b = 0; b < B; ++b)
            for (long l = 0; l < L; ++l)
                for (long h = 0; h < heads; ++h)
                    for (long d = 0; d < D; ++d)
                        gx[(b * L + l) * C + h * D + d] += self.grad[((b * heads + h) * L + l) * D + d];
    });
}

// [B*H, L, D] -> [B, L, H*D]
template <typename S>
Var<S> merge_heads(Var<S> x, long heads) {
    const long BH = x.val().dim(0), L = x.val().dim(1), D = x.val().dim(2);
    const long B = BH / heads, C = heads * D;
    if (B * heads != BH) fail(Errc::ShapeMismatch, "merge_heads batch");
    Tensor<S> y({B, L, C});
    for (long b = 0; b < B; ++b)
        for (long l = 0; l < L; ++l)
            for (long h = 0; h < heads; ++h)
                for (long d = 0; d < D; ++d)
                    y[(b * L + l) * C + h * D + d] = x.val()[((b * heads + h) * L + l) * D + d];
    return x.tape->make(std::move(y), {x.node}, [x = x.node, B, L, C, heads, D](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long b = 0; b < B; ++b)
            for (long l = 0; l < L; ++l)
                for (long h = 0; h < heads; ++h)
                    for (long d = 0; d < D; ++d)
                        gx[((b * heads + h) * L + l) * D + d] += self.grad[(b * L + l) * C + h * D + d];
    });
}

// ---- normalization, softmax ----

template <typename S>
Var<S> softmax_lastdim(Var<S> x) {
    const long C = x.val().dim(x.val().rank() - 1);
    const long rows = x.val().numel() / C;
    Tensor<S> y = x.val();
    for (long r = 0; r < rows; ++r) {
        S* row = y.data() + r * C;
        S mx = row[0];
        for (long j = 1; j < C; ++j) mx = std::max(mx, row[j]);
        S sum = S(0);
        for (long j = 0; j < C; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (long j = 0; j < C; ++j) row[j] /= sum;
    }
    return x.tape->make(std::move(y), {x.node}, [x = x.node, rows, C](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long r = 0; r < rows; ++r) {
            const S* p = self.value.data() + r * C;
            const S* g = self.grad.data() + r * C;
            S dot = S(0);
            for (long j = 0; j < C; ++j) dot += p[j] * g[j];
            for (long j = 0; j < C; ++j) gx[r * C + j] += p[j] * (g[j] - dot);
        }
    });
}

// Adds a constant [L,L] bias (e.g. a causal mask) to every leading slice of
// scores[B,L,L].
template <typename S>
Var<S> add_mask(Var<S> scores, const Tensor<S>& mask) {
    if (scores.val().rank() != 3 || mask.rank() != 2 || scores.val().dim(1) != mask.dim(0) ||
        scores.val().dim(2) != mask.dim(1))
        fail(Errc::ShapeMismatch, "add_mask");
    const long B = scores.val().dim(0), LL = mask.numel();
    Tensor<S> y = scores.val();
    for (long b = 0; b < B; ++b)
        for (long i = 0; i < LL; ++i) y[b * LL + i] += mask[i];
    return scores.tape->make(std::move(y), {scores.node},
                             [s = scores.node](Node<S>& self) { accumulate(s, self.grad); });
}

template <typename S>
Tensor<S> causal_mask(long L) {
    Tensor<S> m({L, L});
    for (long i = 0; i < L; ++i)
        for (long j = 0; j < L; ++j) m[i * L + j] = j > i ? S(-1e9) : S(0);
    return m;
}

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
    const long C = x.val().dim(x.val().rank() - 1);
    if (gamma.val().numel() != C || beta.val().numel() != C) fail(Errc::ShapeMismatch, "layer_norm params");
    const long rows = x.val().numel() / C;
    Tensor<S> y(x.val().shape());
    Tensor<S> xhat(x.val().shape());
    std::vector<S> inv_std(static_cast<size_t>(rows));
    for (long r = 0; r < rows; ++r) {
        const S* row = x.val().data() + r * C;
        S mu = S(0);
        for (long j = 0; j < C; ++j) mu += row[j];
        mu /= S(C);
        S var = S(0);
        for (long j = 0; j < C; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= S(C);
        S is = S(1) / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = is;
        for (long j = 0; j < C; ++j) {
            S xh = (row[j] - mu) * is;
            xhat[r * C + j] = xh;
            y[r * C + j] = gamma.val()[j] * xh + beta.val()[j];
        }
    }
    return x.tape->make(
        std::move(y), {x.node, gamma.node, beta.node},
        [x = x.node, gm = gamma.node, bt = beta.node, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
         C](Node<S>& self) {
            auto& gx = Tape<S>::grad_buf(x);
            auto& ggm = Tape<S>::grad_buf(gm);
            auto& gbt = Tape<S>::grad_buf(bt);
            for (long r = 0; r < rows; ++r) {
                const S* g = self.grad.data() + r * C;
                const S* xh = xhat.data() + r * C;
                S sum_g = S(0), sum_gx = S(0);
                for (long j = 0; j < C; ++j) {
                    const S dxh = g[j] * gm->value[j];
                    sum_g += dxh;
                    sum_gx += dxh * xh[j];
                }
                const S is = inv_std[static_cast<size_t>(r)];
                for (long j = 0; j < C; ++j) {
                    const S dxh = g[j] * gm->value[j];
                    gx[r * C + j] += is * (dxh - sum_g / S(C) - xh[j] * sum_gx / S(C));
                    ggm[j] += g[j] * xh[j];
                    gbt[j] += g[j];
                }
            }
        });
}

// Group normalization over x[B,L,C]: statistics per (batch item, channel
// group) across all positions.
template <typename S>
Var<S> group_norm(Var<S> x, long groups, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
    if (x.val().rank() != 3) fail(Errc::ShapeMismatch, "group_norm needs [B,L,C]");
    const long B = x.val().dim(0), L = x.val().dim(1), C = x.val().dim(2);
    if (C % groups != 0) fail(Errc::ShapeMismatch, "groups must divide channels");
    if (gamma.val().numel() != C || beta.val().numel() != C) fail(Errc::ShapeMismatch, "group_norm params");
    const long gc = C / groups;  // channels per group
    const long n = L * gc;       // elements per statistic
    Tensor<S> y(x.val().shape());
    Tensor<S> xhat(x.val().shape());
    std::vector<S> inv_std(static_cast<size_t>(B * groups));
    for (long b = 0; b < B; ++b)
        for (long g = 0; g < groups; ++g) {
            S mu = S(0);
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < gc; ++c) mu += x.val()[(b * L + l) * C + g * gc + c];
            mu /= S(n);
            S var = S(0);
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < gc; ++c) {
                    S d = x.val()[(b * L + l) * C + g * gc + c] - mu;
                    var += d * d;
                }
            var /= S(n);
            S is = S(1) / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(b * groups + g)] = is;
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < gc; ++c) {
                    long idx = (b * L + l) * C + g * gc + c;
                    S xh = (x.val()[idx] - mu) * is;
                    xhat[idx] = xh;
                    y[idx] = gamma.val()[g * gc + c] * xh + beta.val()[g * gc + c];
                }
        }
    return x.tape->make(
        std::move(y), {x.node, gamma.node, beta.node},
        [x = x.node, gm = gamma.node, bt = beta.node, xhat = std::move(xhat), inv_std = std::move(inv_std), B, L, C,
         groups, gc, n](Node<S>& self) {
            auto& gx = Tape<S>::grad_buf(x);
            auto& ggm = Tape<S>::grad_buf(gm);
            auto& gbt = Tape<S>::grad_buf(bt);
            for (long b = 0; b < B; ++b)
                for (long g = 0; g < groups; ++g) {
                    S sum_g = S(0), sum_gx = S(0);
                    for (long l = 0; l < L; ++l)
                        for (long c = 0; c < gc; ++c) {
                            long idx = (b * L + l) * C + g * gc + c;
                            const S dxh = self.grad[idx] * gm->value[g * gc + c];
                            sum_g += dxh;
                            sum_gx += dxh * xhat[idx];
                        }
                    const S is = inv_std[static_cast<size_t>(b * groups + g)];
                    for (long l = 0; l < L; ++l)
                        for (long c = 0; c < gc; ++c) {
                            long idx = (b * L + l) * C + g * gc + c;
                            const S dxh = self.grad[idx] * gm->value[g * gc + c];
                            gx[idx] += is * (dxh - sum_g / S(n) - xhat[idx] * sum_gx / S(n));
                            ggm[g * gc + c] += self.grad[idx] * xhat[idx];
                            gbt[g * gc + c] += self.grad[idx];
                        }
                }
        });
}

// ---- convolution / resampling ----

// 1D convolution over x[B,L,Cin] with w[K,Cin,Cout], zero padding (K-1)/2.
template <typename S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> b, long stride = 1) {
    if (x.val().rank() != 3 || w.val().rank() != 3) fail(Errc::ShapeMismatch, "conv1d shapes");
    const long B = x.val().dim(0), L = x.val().dim(1), Ci = x.val().dim(2);
    const long K = w.val().dim(0), Co = w.val().dim(2);
    if (w.val().dim(1) != Ci) fail(Errc::ShapeMismatch, "conv1d channel mismatch");
    if (b.val().numel() != Co) fail(Errc::ShapeMismatch, "conv1d bias");
    const long pad = (K - 1) / 2;
    const long Lo = (L + 2 * pad - K) / stride + 1;
    Tensor<S> y({B, Lo, Co});
    for (long bi = 0; bi < B; ++bi)
        for (long lo = 0; lo < Lo; ++lo) {
            S* yrow = y.data() + (bi * Lo + lo) * Co;
            for (long j = 0; j < Co; ++j) yrow[j] = b.val()[j];
            for (long kk = 0; kk < K; ++kk) {
                const long li = lo * stride + kk - pad;
                if (li < 0 || li >= L) continue;
                gemm_nn(x.val().data() + (bi * L + li) * Ci, w.val().data() + kk * Ci * Co, yrow, 1, Ci, Co, true);
            }
        }
    return x.tape->make(std::move(y), {x.node, w.node, b.node},
                        [x = x.node, w = w.node, bb = b.node, B, L, Ci, K, Co, pad, Lo, stride](Node<S>& self) {
                            auto& gx = Tape<S>::grad_buf(x);
                            auto& gw = Tape<S>::grad_buf(w);
                            auto& gb = Tape<S>::grad_buf(bb);
                            for (long bi = 0; bi < B; ++bi)
                                for (long lo = 0; lo < Lo; ++lo) {
                                    const S* grow = self.grad.data() + (bi * Lo + lo) * Co;
                                    for (long j = 0; j < Co; ++j) gb[j] += grow[j];
                                    for (long kk = 0; kk < K; ++kk) {
                                        const long li = lo * stride + kk - pad;
                                        if (li < 0 || li >= L) continue;
                                        gemm_nt(grow, w->value.data() + kk * Ci * Co,
                                                gx.data() + (bi * L + li) * Ci, 1, Co, Ci, true);
                                        gemm_tn(x->value.data() + (bi * L + li) * Ci, grow,
                                                gw.data() + kk * Ci * Co, 1, Ci, Co, true);
                                    }
                                }
                        });
}

template <typename S>
Var<S> upsample_nearest2(Var<S> x) {
    const long B = x.val().dim(0), L = x.val().dim(1), C = x.val().dim(2);
    Tensor<S> y({B, 2 * L, C});
    for (long b = 0; b < B; ++b)
        for (long l = 0; l < L; ++l)
            for (long c = 0; c < C; ++c) {
                y[(b * 2 * L + 2 * l) * C + c] = x.val()[(b * L + l) * C + c];
                y[(b * 2 * L + 2 * l + 1) * C + c] = x.val()[(b * L + l) * C + c];
            }
    return x.tape->make(std::move(y), {x.node}, [x = x.node, B, L, C](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long b = 0; b < B; ++b)
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < C; ++c)
                    gx[(b * L + l) * C + c] +=
                        self.grad[(b * 2 * L + 2 * l) * C + c] + self.grad[(b * 2 * L + 2 * l + 1) * C + c];
    });
}

template <typename S>
Var<S> concat_lastdim(Var<S> a, Var<S> b) {
    if (a.val().rank() != 3 || b.val().rank() != 3 || a.val().dim(0) != b.val().dim(0) ||
        a.val().dim(1) != b.val().dim(1))
        fail(Errc::ShapeMismatch, "concat_lastdim");
    const long B = a.val().dim(0), L = a.val().dim(1), Ca = a.val().dim(2), Cb = b.val().dim(2);
    Tensor<S> y({B, L, Ca + Cb});
    for (long r = 0; r < B * L; ++r) {
        for (long c = 0; c < Ca; ++c) y[r * (Ca + Cb) + c] = a.val()[r * Ca + c];
        for (long c = 0; c < Cb; ++c) y[r * (Ca + Cb) + Ca + c] = b.val()[r * Cb + c];
    }
    return a.tape->make(std::move(y), {a.node, b.node}, [a = a.node, b = b.node, B, L, Ca, Cb](Node<S>& self) {
        auto& ga = Tape<S>::grad_buf(a);
        auto& gb = Tape<S>::grad_buf(b);
        for (long r = 0; r < B * L; ++r) {
            for (long c = 0; c < Ca; ++c) ga[r * Ca + c] += self.grad[r * (Ca + Cb) + c];
            for (long c = 0; c < Cb; ++c) gb[r * Cb + c] += self.grad[r * (Ca + Cb) + Ca + c];
        }
    });
}

template <typename S>
Var<S> slice_lastdim(Var<S> x, long from, long to) {
    const long C = x.val().dim(x.val().rank() - 1);
    if (from < 0 || to > C || from >= to) fail(Errc::ShapeMismatch, "slice_lastdim bounds");
    const long rows = x.val().numel() / C, W = to - from;
    auto shape = x.val().shape();
    shape.back() = W;
    Tensor<S> y(shape);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < W; ++c) y[r * W + c] = x.val()[r * C + from + c];
    return x.tape->make(std::move(y), {x.node}, [x = x.node, rows, C, from, W](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < W; ++c) gx[r * C + from + c] += self.grad[r * W + c];
    });
}

// Broadcast-add a per-item row vector: x[B,L,C] + v[B,C].
template <typename S>
Var<S> add_row_broadcast(Var<S> x, Var<S> v) {
    if (x.val().rank() != 3 || v.val().rank() != 2 || x.val().dim(0) != v.val().dim(0) ||
        x.val().dim(2) != v.val().dim(1))
        fail(Errc::ShapeMismatch, "add_row_broadcast");
    const long B = x.val().dim(0), L = x.val().dim(1), C = x.val().dim(2);
    Tensor<S> y = x.val();
    for (long b = 0; b < B; ++b)
        for (long l = 0; l < L; ++l)
            for (long c = 0; c < C; ++c) y[(b * L + l) * C + c] += v.val()[b * C + c];
    return x.tape->make(std::move(y), {x.node, v.node}, [x = x.node, v = v.node, B, L, C](Node<S>& self) {
        accumulate(x, self.grad);
        auto& gv = Tape<S>::grad_buf(v);
        for (long b = 0; b < B; ++b)
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < C; ++c) gv[b * C + c] += self.grad[(b * L + l) * C + c];
    });
}

// x[B,...] scaled per item by a learned scalar s[B,1] (or [B]).
template <typename S>
Var<S> mul_item_scalar(Var<S> x, Var<S> s) {
    const long B = x.val().dim(0);
    if (s.val().numel() != B) fail(Errc::ShapeMismatch, "mul_item_scalar needs one scalar per item");
    const long inner = x.val().numel() / B;
    Tensor<S> y = x.val();
    for (long b = 0; b < B; ++b)
        for (long j = 0; j < inner; ++j) y[b * inner + j] *= s.val()[b];
    return x.tape->make(std::move(y), {x.node, s.node}, [x = x.node, s = s.node, B, inner](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        auto& gs = Tape<S>::grad_buf(s);
        for (long b = 0; b < B; ++b) {
            S acc = S(0);
            for (long j = 0; j < inner; ++j) {
                gx[b * inner + j] += self.grad[b * inner + j] * s->value[b];
                acc += self.grad[b * inner + j] * x->value[b * inner + j];
            }
            gs[b] += acc;
        }
    });
}

// v[C] broadcast to [B,C] rows, each scaled by a constant weight; rows with
// weight 0 contribute nothing and receive no gradient.
template <typename S>
Var<S> scaled_row_broadcast(Var<S> v, const std::vector<S>& weights) {
    const long C = v.val().numel(), B = static_cast<long>(weights.size());
    Tensor<S> y({B, C});
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c) y[b * C + c] = weights[static_cast<size_t>(b)] * v.val()[c];
    return v.tape->make(std::move(y), {v.node}, [v = v.node, weights, B, C](Node<S>& self) {
        auto& gv = Tape<S>::grad_buf(v);
        for (long b = 0; b < B; ++b)
            for (long c = 0; c < C; ++c) gv[c] += weights[static_cast<size_t>(b)] * self.grad[b * C + c];
    });
}

// ---- lookup, pooling, losses ----

template <typename S>
Var<S> embedding_lookup(Var<S> table, const std::vector<int>& ids, long B, long L) {
    const long V = table.val().dim(0), C = table.val().dim(1);
    if (static_cast<long>(ids.size()) != B * L) fail(Errc::ShapeMismatch, "embedding id count");
    for (int id : ids)
        if (id < 0 || id >= V) fail(Errc::ShapeMismatch, "embedding id out of range");
    Tensor<S> y({B, L, C});
    for (long i = 0; i < B * L; ++i)
        std::memcpy(y.data() + i * C, table.val().data() + ids[static_cast<size_t>(i)] * C,
                    sizeof(S) * static_cast<size_t>(C));
    return table.tape->make(std::move(y), {table.node}, [t = table.node, ids, B, L, C](Node<S>& self) {
        auto& gt = Tape<S>::grad_buf(t);
        for (long i = 0; i < B * L; ++i) {
            S* dst = gt.data() + ids[static_cast<size_t>(i)] * C;
            const S* src = self.grad.data() + i * C;
            for (long c = 0; c < C; ++c) dst[c] += src[c];
        }
    });
}

template <typename S>
Var<S> mean_pool_dim1(Var<S> x) {
    if (x.val().rank() != 3) fail(Errc::ShapeMismatch, "mean_pool_dim1 needs [B,L,C]");
    const long B = x.val().dim(0), L = x.val().dim(1), C = x.val().dim(2);
    Tensor<S> y({B, C});
    for (long b = 0; b < B; ++b)
        for (long l = 0; l < L; ++l)
            for (long c = 0; c < C; ++c) y[b * C + c] += x.val()[(b * L + l) * C + c] / S(L);
    return x.tape->make(std::move(y), {x.node}, [x = x.node, B, L, C](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long b = 0; b < B; ++b)
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < C; ++c) gx[(b * L + l) * C + c] += self.grad[b * C + c] / S(L);
    });
}

template <typename S>
Var<S> mean_all(Var<S> x) {
    const long n = x.val().numel();
    Tensor<S> y({1});
    S acc = S(0);
    for (long i = 0; i < n; ++i) acc += x.val()[i];
    y[0] = acc / S(n);
    return x.tape->make(std::move(y), {x.node}, [x = x.node, n](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        const S g = self.grad[0] / S(n);
        for (long i = 0; i < n; ++i) gx[i] += g;
    });
}

template <typename S>
Var<S> sum_all(Var<S> x) {
    const long n = x.val().numel();
    Tensor<S> y({1});
    S acc = S(0);
    for (long i = 0; i < n; ++i) acc += x.val()[i];
    y[0] = acc;
    return x.tape->make(std::move(y), {x.node}, [x = x.node, n](Node<S>& self) {
        auto& gx = Tape<S>::grad_buf(x);
        for (long i = 0; i < n; ++i) gx[i] += self.grad[0];
    });
}

// Mean cross entropy over rows of logits[N,V] against integer targets.
template <typename S>
Var<S> softmax_cross_entropy(Var<S> logits, const std::vector<int>& targets) {
    if (logits.val().rank() != 2) fail(Errc::ShapeMismatch, "cross entropy needs [N,V]");
    const long N = logits.val().dim(0), V = logits.val().dim(1);
    if (static_cast<long>(targets.size()) != N) fail(Errc::ShapeMismatch, "target count");
    Tensor<S> probs(logits.val().shape());
    S loss = S(0);
    for (long r = 0; r < N; ++r) {
        const S* row = logits.val().data() + r * V;
        S mx = row[0];
        for (long j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        S sum = S(0);
        for (long j = 0; j < V; ++j) sum += std::exp(row[j] - mx);
        const S lse = mx + std::log(sum);
        loss += lse - row[targets[static_cast<size_t>(r)]];
        for (long j = 0; j < V; ++j) probs[r * V + j] = std::exp(row[j] - lse);
    }
    Tensor<S> y({1});
    y[0] = loss / S(N);
    return logits.tape->make(std::move(y), {logits.node},
                             [x = logits.node, probs = std::move(probs), targets, N, V](Node<S>& self) {
                                 auto& gx = Tape<S>::grad_buf(x);
                                 const S g = self.grad[0] / S(N);
                                 for (long r = 0; r < N; ++r) {
                                     for (long j = 0; j < V; ++j) gx[r * V + j] += g * probs[r * V + j];
                                     gx[r * V + targets[static_cast<size_t>(r)]] -= g;
                                 }
                             });
}

// Mean squared error against a constant target.
template <typename S>
Var<S> mse_loss(Var<S> pred, const Tensor<S>& target) {
    require_same_shape(pred.val(), target, "mse");
    const long n = pred.val().numel();
    Tensor<S> y({1});
    S acc = S(0);
    for (long i = 0; i < n; ++i) {
        const S d = pred.val()[i] - target[i];
        acc += d * d;
    }
    y[0] = acc / S(n);
    Tensor<S> tgt = target;
    return pred.tape->make(std::move(y), {pred.node}, [p = pred.node, tgt = std::move(tgt), n](Node<S>& self) {
        auto& gp = Tape<S>::grad_buf(p);
        const S g = self.grad[0] * S(2) / S(n);
        for (long i = 0; i < n; ++i) gp[i] += g * (p->value[i] - tgt[i]);
    });
}

// Multi-head attention over x[B,L,C]: fused projections, optional additive
// mask, softmax rows sum to one by construction.
template <typename S>
Var<S> multi_head_attention(Var<S> x, Var<S> wq, Var<S> bq, Var<S> wk, Var<S> bk, Var<S> wv, Var<S> bv,
                            Var<S> wo, Var<S> bo, long heads, const Tensor<S>* mask = nullptr) {
    const long C = x.val().dim(2);
    const long D = C / heads;
    auto q = split_heads(linear(x, wq, bq), heads);
    auto k = split_heads(linear(x, wk, bk), heads);
    auto v = split_heads(linear(x, wv, bv), heads);
    auto scores = scale(bmm(q, transpose12(k)), S(1) / std::sqrt(static_cast<S>(D)));
    if (mask) scores = add_mask(scores, *mask);
    auto probs = softmax_lastdim(scores);
    auto ctx = merge_heads(bmm(probs, v), heads);
    return linear(ctx, wo, bo);
}

}  // namespace ops

// Sinusoidal timestep embedding (plain tensor; no gradient path).
template <typename S>
Tensor<S> sinusoidal_embedding(const std::vector<int>& t, long dim) {
    const long B = static_cast<long>(t.size());
    const long half = dim / 2;
    Tensor<S> e({B, dim});
    for (long b = 0; b < B; ++b)
        for (long i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double a = static_cast<double>(t[static_cast<size_t>(b)]) * freq;
            e[b * dim + i] = static_cast<S>(std::sin(a));
            e[b * dim + half + i] = static_cast<S>(std::cos(a));
        }
    return e;
}

}  // namespace sold::nn
