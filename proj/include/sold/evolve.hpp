// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Evolutionary property optimization: partially noise a latent, denoise it
// back with zero guidance, keep the best-scoring molecules, repeat.
// Selection is elitist truncation over parents plus offspring, so the
// generation best never decreases. Undecodable latents (empty molecules)
// score as worst rather than erroring.

#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sold/diffusion.hpp"
#include "sold/molgraph.hpp"

namespace sold::evolve {

struct EvolutionConfig {
    long noise_steps = 75;
    double w = 0.0;  // guidance weight during mutation
    long population = 16;
    long offspring = 4;
    long generations = 5;
    std::string objective = "exact_mol_wt";
};

// One mutation: diffuse the working-range latent to t = noise_steps with
// seeded noise, then run the reverse chain back down. noise_steps = 0 is
// the identity.
template <typename S>
nn::Tensor<S> mutate(const diffusion::NoiseSchedule& ns, const diffusion::DenoiseFn<S>& denoise,
                     const nn::Tensor<S>& x0, long noise_steps, double w, uint64_t seed) {
    if (noise_steps < 0 || noise_steps >= ns.T) fail(Errc::TimestepOutOfRange, "noise_steps must be in [0, T)");
    if (noise_steps == 0) return x0;
    Rng rng(seed);
    nn::Tensor<S> eps(x0.shape());
    for (long i = 0; i < eps.numel(); ++i) eps[i] = static_cast<S>(rng.gaussian());
    auto zt = diffusion::q_sample(ns, x0, static_cast<int>(noise_steps), eps);
    return diffusion::ancestral_sample(ns, denoise, w, x0.shape(), rng, static_cast<int>(noise_steps), &zt);
}

// Named objectives over decoded molecules; higher is better. Scores for
// externally computed qualities (docking, drug-likeness) are ingested via
// CSV by the metrics tooling, not evaluated here.
inline std::function<double(const chem::MolGraph&)> make_objective(const std::string& name) {
    auto guard = [](auto fn) {
        return [fn](const chem::MolGraph& g) -> double {
            if (g.empty()) return -std::numeric_limits<double>::infinity();
            return fn(g);
        };
    };
    if (name == "exact_mol_wt") return guard([](const chem::MolGraph& g) { return chem::exact_mol_wt(g); });
    if (name == "neg_exact_mol_wt") return guard([](const chem::MolGraph& g) { return -chem::exact_mol_wt(g); });
    if (name == "balaban_j")
        return guard([](const chem::MolGraph& g) {
            try {
                return chem::balaban_j(g);
            } catch (const Error&) {
                return -std::numeric_limits<double>::infinity();
            }
        });
    if (name == "atom_count") return guard([](const chem::MolGraph& g) { return static_cast<double>(g.atom_count()); });
    fail(Errc::ConfigError, "unknown objective: " + name);
}

struct LineageRow {
    long generation = 0;
    long parent_id = -1;  // -1 for seeded members
    uint64_t seed = 0;
    double objective = 0.0;
    std::string selfies_text;
};

template <typename S>
struct EvolutionResult {
    std::vector<double> best_per_generation;
    std::vector<nn::Tensor<S>> population;  // final survivors, score-sorted
    std::vector<double> population_scores;
    std::vector<LineageRow> lineage;
};

// Latent scorer: decodes a working-range latent and returns its objective
// value plus the SELFIES text (empty molecule -> -inf).
template <typename S>
using LatentScorer = std::function<std::pair<double, std::string>(const nn::Tensor<S>&)>;

template <typename S>
EvolutionResult<S> run_evolution(const diffusion::NoiseSchedule& ns, const diffusion::DenoiseFn<S>& denoise,
                                 const LatentScorer<S>& score, std::vector<nn::Tensor<S>> seed_population,
                                 const EvolutionConfig& cfg, uint64_t master_seed) {
    if (seed_population.empty()) fail(Errc::EmptyPopulation, "evolution needs a non-empty seed population");
    EvolutionResult<S> out;

    struct Member {
        nn::Tensor<S> latent;
        double fitness;
        std::string selfies_text;
        long order;  // deterministic tie-break
    };
    std::vector<Member> population;
    long next_order = 0;
    for (auto& z : seed_population) {
        auto [fit, text] = score(z);
        population.push_back({std::move(z), fit, std::move(text), next_order++});
    }
    auto truncate = [&](std::vector<Member>& pool) {
        std::sort(pool.begin(), pool.end(), [](const Member& a, const Member& b) {
            if (a.fitness != b.fitness) return a.fitness > b.fitness;
            return a.order < b.order;
        });
        if (static_cast<long>(pool.size()) > cfg.population) pool.resize(static_cast<size_t>(cfg.population));
    };
    truncate(population);

    for (long gen = 0; gen < cfg.generations; ++gen) {
        std::vector<Member> pool;
        for (size_t p = 0; p < population.size(); ++p) {
            // parents re-logged each generation alongside their offspring
            out.lineage.push_back({gen, -1, 0, population[p].fitness, population[p].selfies_text});
            pool.push_back(population[p]);
            for (long k = 0; k < cfg.offspring; ++k) {
                const uint64_t seed =
                    Rng::derive(master_seed, "evolve",
                                (static_cast<uint64_t>(gen) << 32) ^ (static_cast<uint64_t>(p) << 8) ^
                                    static_cast<uint64_t>(k))
                        .next_u64();
                auto child = mutate(ns, denoise, population[p].latent, cfg.noise_steps, cfg.w, seed);
                auto [fit, text] = score(child);
                out.lineage.push_back({gen, static_cast<long>(p), seed, fit, text});
                pool.push_back({std::move(child), fit, std::move(text), next_order++});
            }
        }
        truncate(pool);
        population = std::move(pool);
        out.best_per_generation.push_back(population.front().fitness);
    }
    for (auto& m : population) {
        out.population.push_back(std::move(m.latent));
        out.population_scores.push_back(m.fitness);
    }
    return out;
}

inline std::string lineage_csv(const std::vector<LineageRow>& rows) {
    std::string out = "generation,parent_id,seed,objective,selfies\n";
    for (const auto& r : rows) {
        out += std::to_string(r.generation) + "," + std::to_string(r.parent_id) + "," + std::to_string(r.seed) +
               "," + std::to_string(r.objective) + "," + r.selfies_text + "\n";
    }
    return out;
}

}  // namespace sold::evolve
