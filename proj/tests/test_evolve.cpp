// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "sold/evolve.hpp"
#include "sold/smiles.hpp"

using namespace sold;
using namespace sold::evolve;
using nn::Tensor;

namespace {

// Contractive toy denoiser: enough structure for the sampler to run.
diffusion::DenoiseFn<float> toy_denoiser() {
    return [](const Tensor<float>& z, int t, bool) {
        Tensor<float> eps(z.shape());
        for (long i = 0; i < z.numel(); ++i) eps[i] = 0.2f * z[i];
        Tensor<float> v(z.shape());
        return std::make_pair(eps, v);
    };
}

// Scores a latent by the mean of its entries (no decoding involved).
LatentScorer<float> mean_scorer() {
    return [](const Tensor<float>& z) {
        double m = 0;
        for (long i = 0; i < z.numel(); ++i) m += z[i];
        return std::make_pair(m / static_cast<double>(z.numel()), std::string("[C]"));
    };
}

}  // namespace

TEST_CASE("mutation determinism and the zero-step identity") {
    auto ns = diffusion::NoiseSchedule::cosine(100);
    auto dn = toy_denoiser();
    Rng rng(1);
    auto x0 = nn::random_uniform<float>({4, 6}, -0.9f, 0.9f, rng);

    auto same = mutate(ns, dn, x0, 0, 0.0, 42);
    CHECK(std::memcmp(same.data(), x0.data(), sizeof(float) * x0.numel()) == 0);

    auto a = mutate(ns, dn, x0, 25, 0.0, 42);
    auto b = mutate(ns, dn, x0, 25, 0.0, 42);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0);

    auto c = mutate(ns, dn, x0, 25, 0.0, 43);
    CHECK(std::memcmp(a.data(), c.data(), sizeof(float) * a.numel()) != 0);

    CHECK_THROWS_AS(mutate(ns, dn, x0, 100, 0.0, 1), Error);  // must stay below T
    CHECK_THROWS_AS(mutate(ns, dn, x0, -1, 0.0, 1), Error);
}

TEST_CASE("more noise steps perturb the latent more (on average)") {
    auto ns = diffusion::NoiseSchedule::cosine(200);
    auto dn = toy_denoiser();
    Rng rng(2);
    auto x0 = nn::random_uniform<float>({8, 8}, -0.9f, 0.9f, rng);
    auto mean_dist = [&](long steps) {
        double acc = 0;
        for (uint64_t seed = 0; seed < 10; ++seed) {
            auto m = mutate(ns, dn, x0, steps, 0.0, seed);
            double d = 0;
            for (long i = 0; i < m.numel(); ++i) d += (m[i] - x0[i]) * (m[i] - x0[i]);
            acc += std::sqrt(d);
        }
        return acc / 10;
    };
    const double d10 = mean_dist(10), d75 = mean_dist(75), d150 = mean_dist(150);
    CHECK(d10 < d75);
    CHECK(d75 < d150);
}

TEST_CASE("objective registry") {
    auto mw = make_objective("exact_mol_wt");
    auto neg = make_objective("neg_exact_mol_wt");
    auto g = chem::parse_smiles_subset("CCO");
    CHECK(mw(g) == doctest::Approx(chem::exact_mol_wt(g)));
    CHECK(neg(g) == doctest::Approx(-chem::exact_mol_wt(g)));

    chem::MolGraph empty;
    CHECK(mw(empty) == -std::numeric_limits<double>::infinity());

    auto bj = make_objective("balaban_j");
    chem::MolGraph single;
    single.add_atom(chem::Elem::C, 0, 4);
    CHECK(bj(single) == -std::numeric_limits<double>::infinity());  // undefined -> worst

    CHECK_THROWS_AS(make_objective("nope"), Error);
}

TEST_CASE("elitism: generation best never decreases, bookkeeping adds up") {
    auto ns = diffusion::NoiseSchedule::cosine(100);
    EvolutionConfig cfg;
    cfg.population = 8;
    cfg.offspring = 4;
    cfg.generations = 3;
    cfg.noise_steps = 20;

    Rng rng(3);
    std::vector<Tensor<float>> seeds;
    for (int i = 0; i < 8; ++i) seeds.push_back(nn::random_uniform<float>({4, 6}, -0.9f, 0.9f, rng));

    auto result = run_evolution(ns, toy_denoiser(), mean_scorer(), seeds, cfg, 99);
    REQUIRE(result.best_per_generation.size() == 3);
    for (size_t g = 1; g < 3; ++g) CHECK(result.best_per_generation[g] >= result.best_per_generation[g - 1]);

    // population * (1 + offspring) evaluations logged per generation
    CHECK(result.lineage.size() == 8 * (1 + 4) * 3);
    CHECK(result.population.size() == 8);

    // identical seeds reproduce identical lineages
    auto again = run_evolution(ns, toy_denoiser(), mean_scorer(), seeds, cfg, 99);
    CHECK(lineage_csv(again.lineage) == lineage_csv(result.lineage));
    auto other = run_evolution(ns, toy_denoiser(), mean_scorer(), seeds, cfg, 100);
    CHECK(lineage_csv(other.lineage) != lineage_csv(result.lineage));
}

TEST_CASE("one generation with zero offspring keeps the population") {
    auto ns = diffusion::NoiseSchedule::cosine(100);
    EvolutionConfig cfg;
    cfg.population = 4;
    cfg.offspring = 0;
    cfg.generations = 1;
    Rng rng(4);
    std::vector<Tensor<float>> seeds;
    for (int i = 0; i < 4; ++i) seeds.push_back(nn::random_uniform<float>({2, 3}, -0.5f, 0.5f, rng));
    auto result = run_evolution(ns, toy_denoiser(), mean_scorer(), seeds, cfg, 5);
    CHECK(result.population.size() == 4);
    CHECK(result.lineage.size() == 4);

    CHECK_THROWS_AS(run_evolution(ns, toy_denoiser(), mean_scorer(), {}, cfg, 5), Error);
}
