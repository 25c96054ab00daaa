// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the handful of kernels everything else is
// built from. Scalar type is a template parameter: float for training,
// double for finite-difference checks.
//
// Reductions run in one fixed, documented order (row-major, partial lanes
// summed low to high), so results are bitwise reproducible per build.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "sold/error.hpp"
#include "sold/rng.hpp"

namespace sold::nn {

template <typename S>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), S(0));
    }
    Tensor(std::vector<long> shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<long>(data_.size()) != numel_of(shape_))
            fail(Errc::ShapeMismatch, "tensor data does not match shape");
    }

    static long numel_of(const std::vector<long>& shape) {
        long n = 1;
        for (long d : shape) {
            if (d < 0) fail(Errc::ShapeMismatch, "negative extent");
            n *= d;
        }
        return n;
    }

    const std::vector<long>& shape() const { return shape_; }
    long numel() const { return static_cast<long>(data_.size()); }
    long dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    S& operator[](long i) { return data_[static_cast<size_t>(i)]; }
    S operator[](long i) const { return data_[static_cast<size_t>(i)]; }

    Tensor reshaped(std::vector<long> shape) const {
        if (numel_of(shape) != numel()) fail(Errc::ShapeMismatch, "reshape changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out = Tensor<T>(shape_);
        for (long i = 0; i < numel(); ++i) out[i] = static_cast<T>(data_[static_cast<size_t>(i)]);
        return out;
    }

private:
    std::vector<long> shape_;
    std::vector<S> data_;
};

template <typename S>
Tensor<S> zeros_like(const Tensor<S>& t) {
    return Tensor<S>(t.shape());
}

template <typename S>
Tensor<S> random_uniform(std::vector<long> shape, S lo, S hi, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

template <typename S>
Tensor<S> random_normal(std::vector<long> shape, S mean, S stddev, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(mean + stddev * rng.gaussian());
    return t;
}

// ---- GEMM kernels (raw pointers, row-major) ----

// C[m,n] (+)= A[m,k] * B[k,n]. Two-row by 32-column register tile; the
// k loop accumulates sequentially per output element.
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, long m, long k, long n, bool accumulate) {
    constexpr long JT = 32;
    long i = 0;
    for (; i + 1 < m; i += 2) {
        S* c0 = c + i * n;
        S* c1 = c0 + n;
        const S* a0 = a + i * k;
        const S* a1 = a0 + k;
        long j = 0;
        for (; j + JT <= n; j += JT) {
            S acc0[JT], acc1[JT];
            if (accumulate) {
                for (long t = 0; t < JT; ++t) acc0[t] = c0[j + t];
                for (long t = 0; t < JT; ++t) acc1[t] = c1[j + t];
            } else {
                for (long t = 0; t < JT; ++t) acc0[t] = S(0);
                for (long t = 0; t < JT; ++t) acc1[t] = S(0);
            }
            for (long p = 0; p < k; ++p) {
                const S* bp = b + p * n + j;
                const S x0 = a0[p], x1 = a1[p];
                for (long t = 0; t < JT; ++t) acc0[t] += x0 * bp[t];
                for (long t = 0; t < JT; ++t) acc1[t] += x1 * bp[t];
            }
            for (long t = 0; t < JT; ++t) c0[j + t] = acc0[t];
            for (long t = 0; t < JT; ++t) c1[j + t] = acc1[t];
        }
        for (; j < n; ++j) {
            S s0 = accumulate ? c0[j] : S(0);
            S s1 = accumulate ? c1[j] : S(0);
            for (long p = 0; p < k; ++p) {
                s0 += a0[p] * b[p * n + j];
                s1 += a1[p] * b[p * n + j];
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }
    for (; i < m; ++i) {
        S* ci = c + i * n;
        if (!accumulate)
            for (long j = 0; j < n; ++j) ci[j] = S(0);
        for (long p = 0; p < k; ++p) {
            const S aip = a[i * k + p];
            const S* bp = b + p * n;
            for (long j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T. Rows of both operands are contiguous, so
// each output is a dot product with 8 fixed partial lanes.
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, long m, long k, long n, bool accumulate) {
    for (long i = 0; i < m; ++i) {
        const S* ai = a + i * k;
        S* ci = c + i * n;
        for (long j = 0; j < n; ++j) {
            const S* bj = b + j * k;
            S lanes[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
            long p = 0;
            for (; p + 8 <= k; p += 8)
                for (int t = 0; t < 8; ++t) lanes[t] += ai[p + t] * bj[p + t];
            S s = S(0);
            for (; p < k; ++p) s += ai[p] * bj[p];
            for (int t = 0; t < 8; ++t) s += lanes[t];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

// C[k,n] (+)= A[m,k]^T * B[m,n]. Outer-product accumulation over m.
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, long m, long k, long n, bool accumulate) {
    if (!accumulate) std::fill(c, c + k * n, S(0));
    for (long i = 0; i < m; ++i) {
        const S* ai = a + i * k;
        const S* bi = b + i * n;
        for (long p = 0; p < k; ++p) {
            const S aip = ai[p];
            S* cp = c + p * n;
            for (long j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

// ---- shape helpers ----

inline std::string shape_str(const std::vector<long>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
    if (!a.same_shape(b))
        fail(Errc::ShapeMismatch,
             std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace sold::nn
