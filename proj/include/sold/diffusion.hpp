// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// DDPM machinery: noise schedules, the closed-form forward process, the
// hybrid (simple + weighted variational bound) training loss with a learned
// interpolated variance, classifier-free guidance mixing, and the ancestral
// sampler. The denoiser is passed in as a callable so the same loop serves
// the full model, toy models and test oracles.

#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "sold/autodiff.hpp"
#include "sold/rng.hpp"
#include "sold/tensor.hpp"

namespace sold::diffusion {

enum class ScheduleKind : uint8_t { Cosine, Linear };

// Per-timestep quantities, 1-indexed by t (index 0 unused except alpha_bar,
// where alpha_bar[0] = 1 by convention).
struct NoiseSchedule {
    int T = 1000;
    ScheduleKind kind = ScheduleKind::Cosine;
    std::vector<double> beta;        // 1 - alpha_t
    std::vector<double> alpha;       // alpha_t
    std::vector<double> alpha_bar;   // cumulative product, alpha_bar[0] = 1
    std::vector<double> post_var;    // posterior variance beta~_t
    std::vector<double> post_logvar; // log beta~_t with the t=1 entry clipped to t=2's

    static NoiseSchedule cosine(int T = 1000) {
        NoiseSchedule ns;
        ns.T = T;
        ns.kind = ScheduleKind::Cosine;
        const double s = 0.008;
        auto f = [&](double t) {
            const double a = (t / T + s) / (1.0 + s) * 1.5707963267948966;
            const double c = std::cos(a);
            return c * c;
        };
        std::vector<double> bar(static_cast<size_t>(T) + 1);
        for (int t = 0; t <= T; ++t) bar[static_cast<size_t>(t)] = f(t) / f(0);
        ns.beta.assign(static_cast<size_t>(T) + 1, 0.0);
        for (int t = 1; t <= T; ++t)
            ns.beta[static_cast<size_t>(t)] =
                std::min(1.0 - bar[static_cast<size_t>(t)] / bar[static_cast<size_t>(t - 1)], 0.999);
        ns.finish();
        return ns;
    }

    static NoiseSchedule linear(int T = 1000) {
        NoiseSchedule ns;
        ns.T = T;
        ns.kind = ScheduleKind::Linear;
        // endpoints scaled so integrated noise matches the 1000-step variant
        const double lo = 1e-4 * (1000.0 / T), hi = 0.02 * (1000.0 / T);
        ns.beta.assign(static_cast<size_t>(T) + 1, 0.0);
        for (int t = 1; t <= T; ++t)
            ns.beta[static_cast<size_t>(t)] = lo + (hi - lo) * (t - 1) / std::max(1, T - 1);
        ns.finish();
        return ns;
    }

    uint64_t hash() const {
        uint64_t h = fnv1a64(&T, sizeof(T));
        h = fnv1a64(&kind, sizeof(kind), h);
        h = fnv1a64(beta.data(), beta.size() * sizeof(double), h);
        return h;
    }

    void check_t(int t) const {
        if (t < 1 || t > T) fail(Errc::TimestepOutOfRange, "t=" + std::to_string(t));
    }

private:
    void finish() {
        alpha.assign(beta.size(), 0.0);
        alpha_bar.assign(beta.size(), 1.0);
        for (int t = 1; t <= T; ++t) {
            alpha[static_cast<size_t>(t)] = 1.0 - beta[static_cast<size_t>(t)];
            alpha_bar[static_cast<size_t>(t)] = alpha_bar[static_cast<size_t>(t - 1)] * alpha[static_cast<size_t>(t)];
        }
        post_var.assign(beta.size(), 0.0);
        for (int t = 1; t <= T; ++t)
            post_var[static_cast<size_t>(t)] = (1.0 - alpha_bar[static_cast<size_t>(t - 1)]) /
                                               (1.0 - alpha_bar[static_cast<size_t>(t)]) *
                                               beta[static_cast<size_t>(t)];
        post_logvar.assign(beta.size(), 0.0);
        for (int t = 1; t <= T; ++t) {
            const double v = t == 1 && T >= 2 ? post_var[2] : post_var[static_cast<size_t>(t)];
            post_logvar[static_cast<size_t>(t)] = std::log(std::max(v, 1e-40));
        }
    }
};

// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps
template <typename S>
nn::Tensor<S> q_sample(const NoiseSchedule& ns, const nn::Tensor<S>& z0, int t, const nn::Tensor<S>& eps) {
    ns.check_t(t);
    nn::require_same_shape(z0, eps, "q_sample");
    const S a = static_cast<S>(std::sqrt(ns.alpha_bar[static_cast<size_t>(t)]));
    const S b = static_cast<S>(std::sqrt(1.0 - ns.alpha_bar[static_cast<size_t>(t)]));
    nn::Tensor<S> out(z0.shape());
    for (long i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

// mu_theta derived from the predicted noise.
template <typename S>
nn::Tensor<S> mean_from_eps(const NoiseSchedule& ns, const nn::Tensor<S>& zt, int t, const nn::Tensor<S>& eps) {
    ns.check_t(t);
    const double abar = ns.alpha_bar[static_cast<size_t>(t)];
    const S c1 = static_cast<S>(1.0 / std::sqrt(ns.alpha[static_cast<size_t>(t)]));
    const S c2 = static_cast<S>(ns.beta[static_cast<size_t>(t)] / std::sqrt(1.0 - abar));
    nn::Tensor<S> out(zt.shape());
    for (long i = 0; i < zt.numel(); ++i) out[i] = c1 * (zt[i] - c2 * eps[i]);
    return out;
}

// Forward-posterior mean q(z_{t-1} | z_t, z0).
template <typename S>
nn::Tensor<S> posterior_mean(const NoiseSchedule& ns, const nn::Tensor<S>& z0, const nn::Tensor<S>& zt, int t) {
    ns.check_t(t);
    const double abar = ns.alpha_bar[static_cast<size_t>(t)];
    const double abar_prev = ns.alpha_bar[static_cast<size_t>(t - 1)];
    const S c0 = static_cast<S>(std::sqrt(abar_prev) * ns.beta[static_cast<size_t>(t)] / (1.0 - abar));
    const S ct = static_cast<S>(std::sqrt(ns.alpha[static_cast<size_t>(t)]) * (1.0 - abar_prev) / (1.0 - abar));
    nn::Tensor<S> out(z0.shape());
    for (long i = 0; i < z0.numel(); ++i) out[i] = c0 * z0[i] + ct * zt[i];
    return out;
}

// (1+w)*eps_cond - w*eps_null, elementwise. w = 0 returns eps_cond bitwise.
template <typename S>
nn::Tensor<S> cfg_epsilon(const nn::Tensor<S>& eps_cond, const nn::Tensor<S>& eps_null, double w) {
    nn::require_same_shape(eps_cond, eps_null, "cfg_epsilon");
    if (w == 0.0) return eps_cond;
    nn::Tensor<S> out(eps_cond.shape());
    const S wc = static_cast<S>(1.0 + w), wn = static_cast<S>(w);
    for (long i = 0; i < out.numel(); ++i) out[i] = wc * eps_cond[i] - wn * eps_null[i];
    return out;
}

// Prior term: KL(q(z_T | z0) || N(0, I)), mean over dimensions.
template <typename S>
double prior_kl(const NoiseSchedule& ns, const nn::Tensor<S>& z0) {
    const double abar = ns.alpha_bar[static_cast<size_t>(ns.T)];
    const double var = 1.0 - abar;
    const double logvar = std::log(var);
    double acc = 0.0;
    for (long i = 0; i < z0.numel(); ++i) {
        const double mu = std::sqrt(abar) * static_cast<double>(z0[i]);
        acc += 0.5 * (var + mu * mu - 1.0 - logvar);
    }
    return acc / static_cast<double>(z0.numel());
}

// ---- hybrid training loss ----

template <typename S>
struct LossBreakdown {
    nn::Var<S> total;     // L_simple + lambda * L_vlb
    double simple = 0.0;  // value of the simple term
    double vlb = 0.0;     // value of the vlb term
};

// Batched hybrid loss. z0/eps/zt are [B,...] constants, t is per item,
// eps_hat and v are the two model output heads on the tape. Gradients flow
// through eps_hat in the simple term and through v in the vlb term (the
// model mean is treated as constant inside the bound, so the variance head
// cannot hijack it).
template <typename S>
LossBreakdown<S> hybrid_loss(const NoiseSchedule& ns, const nn::Tensor<S>& z0, const nn::Tensor<S>& zt,
                             const std::vector<int>& t, const nn::Tensor<S>& eps, nn::Var<S> eps_hat,
                             nn::Var<S> v, double lambda) {
    using namespace nn::ops;
    const long B = z0.dim(0);
    if (static_cast<long>(t.size()) != B) fail(Errc::ShapeMismatch, "t count");
    const long inner = z0.numel() / B;

    auto simple = mse_loss(eps_hat, eps);

    // log sigma_p^2 = v*log beta + (1-v)*log beta~  (affine in v per item)
    std::vector<S> lscale(static_cast<size_t>(B)), lshift(static_cast<size_t>(B));
    for (long b = 0; b < B; ++b) {
        ns.check_t(t[static_cast<size_t>(b)]);
        const double lb = std::log(ns.beta[static_cast<size_t>(t[static_cast<size_t>(b)])]);
        const double lp = ns.post_logvar[static_cast<size_t>(t[static_cast<size_t>(b)])];
        lscale[static_cast<size_t>(b)] = static_cast<S>(lb - lp);
        lshift[static_cast<size_t>(b)] = static_cast<S>(lp);
    }
    auto logvar = affine_per_item(v, lscale, lshift);

    // Model mean from the detached noise prediction.
    nn::Tensor<S> mu_p(z0.shape());
    for (long b = 0; b < B; ++b) {
        nn::Tensor<S> zb({inner}), eb({inner});
        std::memcpy(zb.data(), zt.data() + b * inner, sizeof(S) * static_cast<size_t>(inner));
        std::memcpy(eb.data(), eps_hat.val().data() + b * inner, sizeof(S) * static_cast<size_t>(inner));
        auto mb = mean_from_eps(ns, zb, t[static_cast<size_t>(b)], eb);
        std::memcpy(mu_p.data() + b * inner, mb.data(), sizeof(S) * static_cast<size_t>(inner));
    }

    // Per-item selector masks: KL for 1 < t < T, discretized NLL at t = 1,
    // constant prior KL at t = T.
    std::vector<S> w_kl(static_cast<size_t>(B), S(0)), w_nll(static_cast<size_t>(B), S(0));
    double prior_part = 0.0;
    for (long b = 0; b < B; ++b) {
        const int tb = t[static_cast<size_t>(b)];
        if (tb == 1) {
            w_nll[static_cast<size_t>(b)] = S(1);
        } else if (tb == ns.T) {
            nn::Tensor<S> zb({inner});
            std::memcpy(zb.data(), z0.data() + b * inner, sizeof(S) * static_cast<size_t>(inner));
            prior_part += prior_kl(ns, zb) / static_cast<double>(B);
        } else {
            w_kl[static_cast<size_t>(b)] = S(1);
        }
    }

    // KL(q || p) per dim: 0.5*(logvar - log bt + (bt + d^2)*exp(-logvar) - 1)
    nn::Tensor<S> quad(z0.shape());  // bt + (mu_q - mu_p)^2, constants
    std::vector<S> neg_log_bt(static_cast<size_t>(B));
    for (long b = 0; b < B; ++b) {
        const int tb = t[static_cast<size_t>(b)];
        const double bt = ns.post_var[static_cast<size_t>(tb)];
        neg_log_bt[static_cast<size_t>(b)] = static_cast<S>(-std::log(std::max(bt, 1e-40)));
        nn::Tensor<S> zb({inner}), z0b({inner});
        std::memcpy(zb.data(), zt.data() + b * inner, sizeof(S) * static_cast<size_t>(inner));
        std::memcpy(z0b.data(), z0.data() + b * inner, sizeof(S) * static_cast<size_t>(inner));
        auto mq = posterior_mean(ns, z0b, zb, tb);
        for (long i = 0; i < inner; ++i) {
            const S d = mq[i] - mu_p[b * inner + i];
            quad[b * inner + i] = static_cast<S>(bt) + d * d;
        }
    }
    std::vector<S> ones(static_cast<size_t>(B), S(1));
    auto kl_core = add(affine_per_item(logvar, ones, neg_log_bt),
                       mul_const(exp_op(scale(logvar, S(-1))), quad));
    auto kl = scale(add_scalar(kl_core, S(-1)), S(0.5));

    // Discretized likelihood at t=1 over 256 levels of [-1, 1].
    const S delta = S(1.0 / 127.5);
    nn::Tensor<S> hi_arg(z0.shape()), lo_arg(z0.shape()), hi_one(z0.shape()), lo_zero(z0.shape());
    for (long i = 0; i < z0.numel(); ++i) {
        const S x = z0[i];
        hi_arg[i] = x + delta - mu_p[i];
        lo_arg[i] = x - delta - mu_p[i];
        hi_one[i] = x > S(0.999) ? S(1) : S(0);
        lo_zero[i] = x < S(-0.999) ? S(1) : S(0);
    }
    auto inv_sigma = exp_op(scale(logvar, S(-0.5)));
    auto cdf = [&](nn::Var<S> arg_scaled) {
        return scale(add_scalar(erf_op(scale(arg_scaled, S(0.7071067811865476))), S(1)), S(0.5));
    };
    auto cdf_hi_raw = cdf(mul_const(inv_sigma, hi_arg));
    auto cdf_lo_raw = cdf(mul_const(inv_sigma, lo_arg));
    // boundary bins stretch to +-infinity
    nn::Tensor<S> hi_keep(z0.shape()), lo_keep(z0.shape());
    for (long i = 0; i < z0.numel(); ++i) {
        hi_keep[i] = S(1) - hi_one[i];
        lo_keep[i] = S(1) - lo_zero[i];
    }
    auto cdf_hi = add_const(mul_const(cdf_hi_raw, hi_keep), hi_one);
    auto cdf_lo = mul_const(cdf_lo_raw, lo_keep);
    auto nll = scale(log_clamped(sub(cdf_hi, cdf_lo), S(1e-12)), S(-1));

    auto vlb_var = add(affine_per_item(kl, w_kl, std::vector<S>(static_cast<size_t>(B), S(0))),
                       affine_per_item(nll, w_nll, std::vector<S>(static_cast<size_t>(B), S(0))));
    auto vlb_mean = mean_all(vlb_var);        // == mean over items of per-item dim means
    auto vlb = add_scalar(vlb_mean, static_cast<S>(prior_part));

    LossBreakdown<S> out{add(simple, scale(vlb, static_cast<S>(lambda))), 0.0, 0.0};
    out.simple = static_cast<double>(simple.val()[0]);
    out.vlb = static_cast<double>(vlb.val()[0]);
    return out;
}

// ---- sampling ----

// Denoiser callable: (zt, t, use_null_conditioning) -> {eps_hat, v}.
template <typename S>
using DenoiseFn = std::function<std::pair<nn::Tensor<S>, nn::Tensor<S>>(const nn::Tensor<S>&, int, bool)>;

struct SampleOptions {
    // The data lives in [-1, 1]; clamping the implied clean signal there
    // each step keeps the chain bounded even for weak denoisers.
    bool clip_implied_x0 = true;
    double clip_lo = -1.0;
    double clip_hi = 1.0;
    bool noise_free = false;  // deterministic reverse steps
};

// mu_theta from the implied clean signal: invert z_t = sqrt(abar) x0 +
// sqrt(1-abar) eps, optionally clamp x0, then take the forward-posterior
// mean. Without clamping this is algebraically identical to mean_from_eps.
template <typename S>
nn::Tensor<S> mean_from_eps_clipped(const NoiseSchedule& ns, const nn::Tensor<S>& zt, int t,
                                    const nn::Tensor<S>& eps, const SampleOptions& opt) {
    if (!opt.clip_implied_x0) return mean_from_eps(ns, zt, t, eps);
    const double abar = ns.alpha_bar[static_cast<size_t>(t)];
    const S ia = static_cast<S>(1.0 / std::sqrt(abar));
    const S ib = static_cast<S>(std::sqrt(1.0 - abar) / std::sqrt(abar));
    nn::Tensor<S> x0(zt.shape());
    for (long i = 0; i < zt.numel(); ++i) {
        S v = ia * zt[i] - ib * eps[i];
        v = std::min(static_cast<S>(opt.clip_hi), std::max(static_cast<S>(opt.clip_lo), v));
        x0[i] = v;
    }
    return posterior_mean(ns, x0, zt, t);
}

// Ancestral sampler. Runs t = start_t .. 1; when `init` is null the chain
// starts from standard normal noise (start_t must then be T). The variance
// comes from the conditional pass's interpolation head, with the
// coefficient clamped to [0, 1] so it stays an interpolation; only the
// noise prediction is guidance-mixed. The final step adds no noise.
template <typename S>
nn::Tensor<S> ancestral_sample(const NoiseSchedule& ns, const DenoiseFn<S>& denoise, double w,
                               const std::vector<long>& shape, Rng& rng, int start_t = -1,
                               const nn::Tensor<S>* init = nullptr, const SampleOptions& opt = {}) {
    const int start = start_t < 0 ? ns.T : start_t;
    if (start < 0 || start > ns.T) fail(Errc::TimestepOutOfRange, "sampler start");
    nn::Tensor<S> z(shape);
    if (init) {
        nn::require_same_shape(*init, z, "sampler init");
        z = *init;
    } else {
        for (long i = 0; i < z.numel(); ++i) z[i] = static_cast<S>(rng.gaussian());
    }
    for (int t = start; t >= 1; --t) {
        auto [eps_c, v] = denoise(z, t, false);
        nn::Tensor<S> eps = eps_c;
        if (w != 0.0) eps = cfg_epsilon(eps_c, denoise(z, t, true).first, w);
        auto mu = mean_from_eps_clipped(ns, z, t, eps, opt);
        if (t == 1) {
            z = mu;
            break;
        }
        if (opt.noise_free) {
            z = mu;
            continue;
        }
        const double lb = std::log(ns.beta[static_cast<size_t>(t)]);
        const double lp = ns.post_logvar[static_cast<size_t>(t)];
        for (long i = 0; i < z.numel(); ++i) {
            const double vi = std::min(1.0, std::max(0.0, static_cast<double>(v[i])));
            const double logvar = vi * lb + (1.0 - vi) * lp;
            z[i] = mu[i] + static_cast<S>(std::exp(0.5 * logvar) * rng.gaussian());
        }
    }
    return z;
}

}  // namespace sold::diffusion
