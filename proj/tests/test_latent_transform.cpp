// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "sold/latent_transform.hpp"
#include "sold/rng.hpp"

using namespace sold;
using namespace sold::latent;
using sold::nn::Tensor;

TEST_CASE("fit computes population statistics and rejects degenerate corpora") {
    std::vector<Tensor<double>> two = {Tensor<double>({2}, {-1.0, 1.0})};
    auto s = fit(two);
    CHECK(s.mean == doctest::Approx(0.0));
    CHECK(s.std == doctest::Approx(1.0));

    std::vector<Tensor<double>> flat = {Tensor<double>({4}, {0.0, 0.0, 0.0, 0.0})};
    CHECK_THROWS_AS(fit(flat), Error);
    std::vector<Tensor<double>> one = {Tensor<double>({1}, {3.0})};
    CHECK_THROWS_AS(fit(one), Error);

    // Large Gaussian sample: recovered stats within 3/sqrt(N).
    Rng rng(123);
    const long N = 200000;
    Tensor<double> big({N});
    for (long i = 0; i < N; ++i) big[i] = 2.5 + 0.7 * rng.gaussian();
    auto sb = fit(std::vector<Tensor<double>>{big});
    const double bound = 3.0 / std::sqrt(static_cast<double>(N));
    CHECK(std::abs(sb.mean - 2.5) < bound);
    CHECK(std::abs(sb.std - 0.7) < bound);
}

TEST_CASE("forward maps the mean to zero and known quantiles to known points") {
    LatentStats s{1.5, 2.0};
    CHECK(forward_value(1.5, s) == doctest::Approx(0.0).epsilon(1e-15));

    // Oracle: Phi(1.959964) ~ 0.975, so output ~ 0.95.
    CHECK(forward_value(1.5 + 2.0 * 1.959964, s) == doctest::Approx(0.95).epsilon(1e-6));

    // Strictly inside (-1, 1) even far out.
    CHECK(forward_value(1.5 + 2.0 * 40.0, s) < 1.0);
    CHECK(forward_value(1.5 - 2.0 * 40.0, s) > -1.0);
}

TEST_CASE("inverse endpoints engage the clamp at +-6.5") {
    LatentStats s{0.0, 1.0};
    CHECK(inverse_value(1.0, s) == doctest::Approx(6.5).epsilon(1e-15));
    CHECK(inverse_value(-1.0, s) == doctest::Approx(-6.5).epsilon(1e-15));
    CHECK(inverse_value(0.0, s) == doctest::Approx(0.0).epsilon(1e-12));

    LatentStats s2{-3.0, 0.5};
    CHECK(inverse_value(1.0, s2) == doctest::Approx(-3.0 + 0.5 * 6.5).epsilon(1e-12));

    CHECK_THROWS_AS(inverse_value(1.1, s), Error);
    CHECK(inverse_value(1.0 + 0.5e-9, s) == doctest::Approx(6.5));  // inside tolerance: clamp
}

TEST_CASE("round trip within 1e-6 relative for |standardized z| <= 6") {
    LatentStats s{0.37, 1.42};
    Rng rng(5);
    for (int i = 0; i < 5000; ++i) {
        const double u = rng.uniform(-6.0, 6.0);
        const double z = s.mean + s.std * u;
        const double back = inverse_value(forward_value(z, s), s);
        const double denom = std::max(std::abs(z), 1e-3);
        CHECK(std::abs(back - z) / denom < 1e-6);
    }
}

TEST_CASE("icdf accuracy against the cdf") {
    Rng rng(6);
    for (int i = 0; i < 2000; ++i) {
        const double z = rng.uniform(-6.5, 6.5);
        const double p = normal_cdf(z);
        // Below the median the quantile is recoverable to ~1e-10. Above it,
        // p sits in [0.5, 1) where the spacing of doubles alone limits the
        // representable quantile to ulp(1)/pdf(z); test against that bound.
        const double pdf = std::exp(-0.5 * z * z) * 0.3989422804014327;
        const double bound = z <= 0.0 ? 1e-10 : std::max(1e-10, 8.0 * 1.11e-16 / pdf);
        CHECK(std::abs(normal_icdf(p) - z) < bound);
    }
}

TEST_CASE("monotonicity across the working range") {
    LatentStats s{0.0, 1.0};
    double prev_x = forward_value(-6.51, s);
    for (double z = -6.5; z <= 6.5; z += 0.005) {
        const double x = forward_value(z, s);
        CHECK(x > prev_x);
        prev_x = x;
    }
}

TEST_CASE("tensor forms agree with scalar forms") {
    LatentStats s{0.2, 3.0};
    Tensor<float> z({4}, {-2.f, 0.2f, 5.f, 100.f});
    auto x = forward(z, s);
    for (long i = 0; i < 4; ++i)
        CHECK(static_cast<double>(x[i]) == doctest::Approx(forward_value(z[i], s)).epsilon(1e-6));
    auto back = inverse(x, s);
    CHECK(back[1] == doctest::Approx(0.2).epsilon(1e-4));
}
