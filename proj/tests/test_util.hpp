// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: a random generator of connected, valence-valid
// molecular graphs used by round-trip and corpus-level tests.

#pragma once

#include <vector>

#include "sold/molgraph.hpp"
#include "sold/rng.hpp"

namespace sold::testutil {

// Connected random molecule. Elements are weighted toward organic chemistry;
// roughly one atom in twenty carries a +1/-1 charge.
inline chem::MolGraph random_molecule(Rng& rng, int max_atoms = 12) {
    using chem::Elem;
    const Elem pool[] = {Elem::C, Elem::C, Elem::C, Elem::C, Elem::C, Elem::C, Elem::N, Elem::N,
                         Elem::O, Elem::O, Elem::S, Elem::F, Elem::Cl, Elem::Br, Elem::I, Elem::P, Elem::B};
    const int n = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_atoms)));

    std::vector<Elem> elem(n);
    std::vector<int> charge(n, 0), budget(n), bond_sum(n, 0);
    auto chargeable = [](Elem e, int q) {
        // Mirrors the charged tokens in the standard SELFIES vocabulary.
        switch (e) {
            case Elem::C:
            case Elem::N:
            case Elem::O:
            case Elem::S: return true;
            case Elem::P: return q > 0;
            case Elem::B: return q < 0;
            default: return false;
        }
    };
    for (int i = 0; i < n; ++i) {
        elem[i] = pool[rng.below(std::size(pool))];
        if (rng.bernoulli(0.05)) {
            int q = rng.bernoulli(0.5) ? 1 : -1;
            if (chargeable(elem[i], q)) charge[i] = q;
        }
        auto vals = chem::allowed_valences(elem[i], charge[i]);
        budget[i] = rng.bernoulli(0.85) ? vals.front() : vals.back();
    }

    std::vector<std::array<int, 3>> edges;
    auto bonded = [&](int a, int b) {
        for (auto& e : edges)
            if ((e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)) return true;
        return false;
    };
    for (int i = 1; i < n; ++i) {
        std::vector<int> open_sites;
        for (int j = 0; j < i; ++j)
            if (budget[j] - bond_sum[j] >= 1) open_sites.push_back(j);
        if (open_sites.empty()) {
            // No open valence anywhere; shrink the molecule.
            elem.resize(i);
            charge.resize(i);
            budget.resize(i);
            bond_sum.resize(i);
            break;
        }
        int j = open_sites[rng.below(open_sites.size())];
        int max_order = std::min(3, std::min(budget[i] - bond_sum[i], budget[j] - bond_sum[j]));
        int order = 1;
        if (max_order >= 2 && rng.bernoulli(0.25)) order = 2;
        if (max_order >= 3 && rng.bernoulli(0.10)) order = 3;
        edges.push_back({j, i, order});
        bond_sum[i] += order;
        bond_sum[j] += order;
    }
    const int m = static_cast<int>(elem.size());

    // Occasional extra ring closure.
    for (int tries = 0; tries < 2 && m > 3; ++tries) {
        if (!rng.bernoulli(0.4)) continue;
        int a = static_cast<int>(rng.below(m));
        int b = static_cast<int>(rng.below(m));
        if (a == b || bonded(a, b)) continue;
        if (budget[a] - bond_sum[a] < 1 || budget[b] - bond_sum[b] < 1) continue;
        edges.push_back({a, b, 1});
        bond_sum[a] += 1;
        bond_sum[b] += 1;
    }

    chem::MolGraph g;
    for (int i = 0; i < m; ++i)
        g.add_atom(elem[i], charge[i], chem::default_implicit_h(elem[i], charge[i], bond_sum[i]));
    for (auto& e : edges) g.add_bond(e[0], e[1], e[2]);
    return g;
}

}  // namespace sold::testutil
