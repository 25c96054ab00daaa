// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Dual-balancing multi-task optimizer. Each task's loss is balanced in
// scale by differentiating log(loss + eps) — i.e. the raw gradient is
// divided by (loss + eps) — then passed through Adam-style first/second
// moment normalization per task. The shared parameters move along
//
//     g~ = alpha * sum_k ghat_k / (||ghat_k||_2 + eps),
//     alpha = max_k ||ghat_k||_2,
//
// so every task contributes a direction of comparable length regardless of
// its raw loss scale. Task-specific parameters get a plain per-task
// Adam-on-log-loss update with no cross-task mixing.
//
// Moments are stored raw and bias-corrected at use (the standard Adam
// convention). The in-place corrected recursion, which re-feeds corrected
// moments into the decay, is available behind `literal_bias_correction`
// for comparison.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sold/error.hpp"
#include "sold/tensor.hpp"

namespace sold::mtl {

struct BalancerConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double loss_floor = 1e-8;  // losses are clamped below at this before the log transform
    bool literal_bias_correction = false;
};

template <typename S>
class DualBalancer {
public:
    DualBalancer(long shared_size, std::vector<long> task_sizes, BalancerConfig cfg = {})
        : cfg_(cfg), shared_size_(shared_size), task_sizes_(std::move(task_sizes)) {
        const size_t K = task_sizes_.size();
        mu_.assign(K, std::vector<S>(static_cast<size_t>(shared_size_), S(0)));
        nu_.assign(K, std::vector<S>(static_cast<size_t>(shared_size_), S(0)));
        mu_psi_.resize(K);
        nu_psi_.resize(K);
        for (size_t k = 0; k < K; ++k) {
            mu_psi_[k].assign(static_cast<size_t>(task_sizes_[k]), S(0));
            nu_psi_[k].assign(static_cast<size_t>(task_sizes_[k]), S(0));
        }
    }

    long task_count() const { return static_cast<long>(task_sizes_.size()); }
    long step_count() const { return t_; }
    const BalancerConfig& config() const { return cfg_; }

    // Scale factor applied to a raw-loss gradient: d log(l + eps) = dl/(l + eps).
    double log_scale(double loss) const {
        if (loss <= -cfg_.eps) fail(Errc::NonPositiveShiftedLoss, "loss + eps must be positive");
        return 1.0 / (std::max(loss, cfg_.loss_floor) + cfg_.eps);
    }

    // One balanced update over the shared parameters. `grads[k]` is task
    // k's raw-loss gradient over theta (flattened). Returns eta * g~, the
    // vector to subtract from theta. Advances the step counter.
    std::vector<S> shared_update(const std::vector<double>& losses, const std::vector<std::vector<S>>& grads,
                                 double lr) {
        const size_t K = task_sizes_.size();
        if (losses.size() != K || grads.size() != K) fail(Errc::ShapeMismatch, "task count mismatch");
        for (const auto& g : grads)
            if (static_cast<long>(g.size()) != shared_size_) fail(Errc::ShapeMismatch, "shared gradient size");
        ++t_;

        std::vector<std::vector<S>> ghat(K, std::vector<S>(static_cast<size_t>(shared_size_)));
        std::vector<double> norms(K, 0.0);
        for (size_t k = 0; k < K; ++k) {
            const double scale = log_scale(losses[k]);
            step_moments(mu_[k], nu_[k], grads[k], scale, ghat[k]);
            double n2 = 0.0;
            for (S x : ghat[k]) n2 += static_cast<double>(x) * static_cast<double>(x);
            norms[k] = std::sqrt(n2);
        }
        double alpha = 0.0;
        for (double n : norms) alpha = std::max(alpha, n);

        std::vector<S> update(static_cast<size_t>(shared_size_), S(0));
        for (size_t k = 0; k < K; ++k) {
            const double w = alpha / (norms[k] + cfg_.eps);
            for (long i = 0; i < shared_size_; ++i)
                update[static_cast<size_t>(i)] += static_cast<S>(lr * w * static_cast<double>(ghat[k][static_cast<size_t>(i)]));
        }
        return update;
    }

    // Per-task update of psi_k (no cross-task coupling): eta * mu'/(sqrt(nu') + eps).
    std::vector<S> task_update(int k, double loss, const std::vector<S>& grad, double lr) {
        if (k < 0 || k >= task_count()) fail(Errc::ShapeMismatch, "task index");
        if (static_cast<long>(grad.size()) != task_sizes_[static_cast<size_t>(k)])
            fail(Errc::ShapeMismatch, "task gradient size");
        const double scale = log_scale(loss);
        std::vector<S> ghat(grad.size());
        step_moments(mu_psi_[static_cast<size_t>(k)], nu_psi_[static_cast<size_t>(k)], grad, scale, ghat);
        for (auto& x : ghat) x = static_cast<S>(lr * static_cast<double>(x));
        return ghat;
    }

    // Checkpoint access: flat state vectors in a fixed order.
    std::vector<std::pair<std::string, std::vector<S>*>> state() {
        std::vector<std::pair<std::string, std::vector<S>*>> out;
        for (size_t k = 0; k < task_sizes_.size(); ++k) {
            out.push_back({"balancer.mu" + std::to_string(k), &mu_[k]});
            out.push_back({"balancer.nu" + std::to_string(k), &nu_[k]});
            out.push_back({"balancer.mu_psi" + std::to_string(k), &mu_psi_[k]});
            out.push_back({"balancer.nu_psi" + std::to_string(k), &nu_psi_[k]});
        }
        return out;
    }
    void set_step_count(long t) { t_ = t; }

private:
    // Updates the stored moments with the log-scaled gradient and writes the
    // bias-corrected normalized gradient into `ghat`.
    void step_moments(std::vector<S>& mu, std::vector<S>& nu, const std::vector<S>& raw_grad, double scale,
                      std::vector<S>& ghat) const {
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (size_t i = 0; i < raw_grad.size(); ++i) {
            const double g = static_cast<double>(raw_grad[i]) * scale;
            double m = b1 * static_cast<double>(mu[i]) + (1.0 - b1) * g;
            double v = b2 * static_cast<double>(nu[i]) + (1.0 - b2) * g * g;
            double mhat, vhat;
            if (cfg_.literal_bias_correction) {
                // the printed in-place recursion stores corrected moments
                m /= c1;
                v /= c2;
                mhat = m;
                vhat = v;
            } else {
                mhat = m / c1;
                vhat = v / c2;
            }
            mu[i] = static_cast<S>(m);
            nu[i] = static_cast<S>(v);
            ghat[i] = static_cast<S>(mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }

    BalancerConfig cfg_;
    long shared_size_ = 0;
    std::vector<long> task_sizes_;
    long t_ = 0;
    std::vector<std::vector<S>> mu_, nu_;          // per task, over theta
    std::vector<std::vector<S>> mu_psi_, nu_psi_;  // per task, over psi_k
};

}  // namespace sold::mtl
