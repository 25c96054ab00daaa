// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Bijective map between raw encoder latents and the [-1, 1] diffusion
// working range: standardize with one global mean/std, squash through the
// standard normal CDF, and linearly rescale. The inverse clamps the
// standardized value to +-6.5 before de-standardizing.

#pragma once

#include <cmath>

#include "sold/error.hpp"
#include "sold/tensor.hpp"

namespace sold::latent {

inline constexpr double kStandardizedClamp = 6.5;

// Standard normal CDF via erf; absolute error well under 1e-12.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

// Inverse standard normal CDF: rational approximation (central and tail
// branches) refined by one Newton step on the CDF. Absolute error is below
// 1e-10 across the +-6.5 working interval.
inline double normal_icdf(double p) {
    if (p <= 0.0) return -kStandardizedClamp;
    if (p >= 1.0) return kStandardizedClamp;

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};

    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    bool upper_tail = false;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        upper_tail = true;
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Newton refinement. In the upper tail work with the complementary
    // CDF so the residual does not cancel against 1.
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    if (pdf > 0.0) {
        const double e = upper_tail ? (0.5 * std::erfc(x * 0.7071067811865475244) - (1.0 - p))
                                    : (normal_cdf(x) - p);
        x -= upper_tail ? -e / pdf : e / pdf;
    }
    return x;
}

struct LatentStats {
    double mean = 0.0;
    double std = 1.0;
};

// Population mean/std over every entry of every latent in the corpus.
template <typename S>
LatentStats fit(const std::vector<nn::Tensor<S>>& corpus) {
    long n = 0;
    double sum = 0.0;
    for (const auto& t : corpus) {
        n += t.numel();
        for (long i = 0; i < t.numel(); ++i) sum += static_cast<double>(t[i]);
    }
    if (n < 2) fail(Errc::DegenerateCorpus, "need at least 2 latent entries");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& t : corpus)
        for (long i = 0; i < t.numel(); ++i) {
            const double d = static_cast<double>(t[i]) - mean;
            ss += d * d;
        }
    const double var = ss / static_cast<double>(n);
    if (var <= 0.0) fail(Errc::DegenerateCorpus, "latent corpus has zero variance");
    return {mean, std::sqrt(var)};
}

// Output is clamped to the largest representable magnitude below 1 so it
// stays strictly inside (-1, 1) for every finite input.
inline double forward_value(double z, const LatentStats& s) {
    const double x = 2.0 * normal_cdf((z - s.mean) / s.std) - 1.0;
    const double lim = std::nextafter(1.0, 0.0);
    return std::min(lim, std::max(-lim, x));
}

// OutOfRange beyond |x| > 1 + 1e-9; values inside the tolerance band clamp.
inline double inverse_value(double x, const LatentStats& s) {
    if (std::abs(x) > 1.0 + 1e-9) fail(Errc::OutOfRange, "inverse input outside [-1, 1]");
    x = std::min(1.0, std::max(-1.0, x));
    double z = normal_icdf((x + 1.0) / 2.0);
    z = std::min(kStandardizedClamp, std::max(-kStandardizedClamp, z));
    return s.mean + s.std * z;
}

template <typename S>
nn::Tensor<S> forward(const nn::Tensor<S>& z, const LatentStats& s) {
    nn::Tensor<S> out(z.shape());
    const S lim = std::nextafter(S(1), S(0));  // re-clamp after narrowing
    for (long i = 0; i < z.numel(); ++i) {
        const S v = static_cast<S>(forward_value(static_cast<double>(z[i]), s));
        out[i] = std::min(lim, std::max(-lim, v));
    }
    return out;
}

template <typename S>
nn::Tensor<S> inverse(const nn::Tensor<S>& x, const LatentStats& s) {
    nn::Tensor<S> out(x.shape());
    for (long i = 0; i < x.numel(); ++i) out[i] = static_cast<S>(inverse_value(static_cast<double>(x[i]), s));
    return out;
}

}  // namespace sold::latent
