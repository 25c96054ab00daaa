// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Named parameters, bias-corrected Adam and the finite-difference check.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sold/autodiff.hpp"
#include "sold/tensor.hpp"

namespace sold::nn {

template <typename S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;

    explicit Parameter(std::string n = "", Tensor<S> v = Tensor<S>({0}))
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(S(0)); }
};

// Standard Adam with raw stored moments and bias correction at use.
template <typename S>
class Adam {
public:
    Adam(std::vector<Parameter<S>*> params, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) slots_.push_back({Tensor<S>(p->value.shape()), Tensor<S>(p->value.shape())});
    }

    void step(S lr) {
        ++t_;
        const S c1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
        const S c2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            auto& m = slots_[i].m;
            auto& v = slots_[i].v;
            for (long j = 0; j < p.value.numel(); ++j) {
                const S g = p.grad[j];
                m[j] = beta1_ * m[j] + (S(1) - beta1_) * g;
                v[j] = beta2_ * v[j] + (S(1) - beta2_) * g * g;
                const S mhat = m[j] / c1;
                const S vhat = v[j] / c2;
                p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    long step_count() const { return t_; }

    // Checkpoint access: moment tensors in parameter order (m then v), plus
    // the step counter.
    struct Slot {
        Tensor<S> m, v;
    };
    std::vector<Slot>& slots() { return slots_; }
    void set_step_count(long t) { t_ = t; }

private:
    std::vector<Parameter<S>*> params_;
    std::vector<Slot> slots_;
    S beta1_, beta2_, eps_;
    long t_ = 0;
};

// Central finite differences against the analytic gradient, h = 1e-5.
// `build` reconstructs the scalar loss graph from the current contents of
// `inputs` on every call. Returns the worst relative error; denominator
// floors at 1e-6 so near-zero gradients compare absolutely.
inline double grad_check(const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& build,
                         std::vector<Tensor<double>*> inputs, double h = 1e-5) {
    auto eval = [&](std::vector<Tensor<double>*>* grads_out) {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        leaves.reserve(inputs.size());
        for (auto* t : inputs) leaves.push_back(tape.leaf(*t));
        auto loss = build(tape, leaves);
        if (loss.val().numel() != 1) fail(Errc::ShapeMismatch, "grad_check needs a scalar function");
        const double value = loss.val()[0];
        if (!std::isfinite(value)) fail(Errc::NonFiniteValue, "non-finite loss in grad_check");
        if (grads_out) {
            tape.backward(loss);
            for (size_t i = 0; i < inputs.size(); ++i) {
                auto& g = Tape<double>::grad_buf(leaves[i].node);
                **(grads_out->begin() + static_cast<long>(i)) = g;
            }
        }
        return value;
    };

    std::vector<Tensor<double>> analytic(inputs.size());
    std::vector<Tensor<double>*> aptr;
    for (auto& a : analytic) aptr.push_back(&a);
    eval(&aptr);

    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        Tensor<double>& x = *inputs[i];
        for (long j = 0; j < x.numel(); ++j) {
            const double keep = x[j];
            x[j] = keep + h;
            const double fp = eval(nullptr);
            x[j] = keep - h;
            const double fm = eval(nullptr);
            x[j] = keep;
            const double numeric = (fp - fm) / (2 * h);
            const double a = analytic[i][j];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                fail(Errc::NonFiniteValue, "non-finite derivative in grad_check");
            const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Initialization conventions (documented here, used by both models):
// linear and attention weights are uniform with gain 1/sqrt(fan_in);
// embeddings are normal(0, 0.02); biases start at zero.
template <typename S>
Tensor<S> init_linear_weight(long fan_in, long fan_out, Rng& rng) {
    const S a = S(1) / std::sqrt(static_cast<S>(fan_in));
    return random_uniform<S>({fan_in, fan_out}, -a, a, rng);
}

template <typename S>
Tensor<S> init_conv_weight(long k, long fan_in, long fan_out, Rng& rng) {
    const S a = S(1) / std::sqrt(static_cast<S>(k * fan_in));
    return random_uniform<S>({k, fan_in, fan_out}, -a, a, rng);
}

template <typename S>
Tensor<S> init_embedding(long vocab, long dim, Rng& rng) {
    return random_normal<S>({vocab, dim}, S(0), S(0.02), rng);
}

}  // namespace sold::nn
