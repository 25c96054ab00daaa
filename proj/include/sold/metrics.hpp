// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Circular (neighborhood-hashing) fingerprints, Tanimoto similarity, set
// diversity, validity/uniqueness/novelty counters, and the binding-energy
// to IC50 conversion. The fingerprint hash is 64-bit FNV-1a over canonical
// invariant byte encodings, folded modulo the width — fully specified, so
// bits are identical across builds and platforms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sold/molgraph.hpp"

namespace sold::metrics {

using chem::MolGraph;

struct Fingerprint {
    int radius = 2;
    std::vector<uint64_t> bits;  // width/64 words

    explicit Fingerprint(int width = 2048, int r = 2) : radius(r), bits(static_cast<size_t>(width / 64), 0) {}

    int width() const { return static_cast<int>(bits.size()) * 64; }

    void set(int i) { bits[static_cast<size_t>(i / 64)] |= uint64_t(1) << (i % 64); }

    long popcount() const {
        long n = 0;
        for (uint64_t w : bits) n += __builtin_popcountll(w);
        return n;
    }

    bool operator==(const Fingerprint&) const = default;
};

namespace detail {

inline void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

// ECFP-style iterative neighborhood hashing. Initial invariants cover
// element, degree, charge, hydrogen count and incident bond-order sum; each
// round folds in sorted (bond order, neighbor id) pairs.
inline Fingerprint fingerprint(const MolGraph& g, int radius = 2, int width = 2048) {
    Fingerprint fp(width, radius);
    if (g.empty()) return fp;  // all-zero
    auto adj = g.adjacency();

    std::vector<uint64_t> id(static_cast<size_t>(g.atom_count()));
    for (int i = 0; i < g.atom_count(); ++i) {
        const auto& a = g.atom(i);
        std::string enc;
        enc.push_back(static_cast<char>(a.element));
        enc.push_back(static_cast<char>(a.charge + 8));
        enc.push_back(static_cast<char>(a.implicit_h));
        enc.push_back(static_cast<char>(adj[i].size()));
        enc.push_back(static_cast<char>(g.bond_order_sum(i)));
        id[static_cast<size_t>(i)] = fnv1a64(enc);
    }
    for (uint64_t x : id) fp.set(static_cast<int>(x % static_cast<uint64_t>(width)));

    for (int round = 0; round < radius; ++round) {
        std::vector<uint64_t> next(id.size());
        for (int i = 0; i < g.atom_count(); ++i) {
            std::vector<std::pair<int, uint64_t>> nb;
            nb.reserve(adj[i].size());
            for (auto [j, order] : adj[i]) nb.push_back({order, id[static_cast<size_t>(j)]});
            std::sort(nb.begin(), nb.end());
            std::string enc;
            detail::put_u64(enc, id[static_cast<size_t>(i)]);
            for (const auto& [order, nid] : nb) {
                enc.push_back(static_cast<char>(order));
                detail::put_u64(enc, nid);
            }
            next[static_cast<size_t>(i)] = fnv1a64(enc);
        }
        id = std::move(next);
        for (uint64_t x : id) fp.set(static_cast<int>(x % static_cast<uint64_t>(width)));
    }
    return fp;
}

// |a AND b| / |a OR b|; both all-zero counts as identical (1.0).
inline double tanimoto(const Fingerprint& a, const Fingerprint& b) {
    if (a.width() != b.width()) fail(Errc::WidthMismatch, "fingerprint widths differ");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < a.bits.size(); ++i) {
        inter += __builtin_popcountll(a.bits[i] & b.bits[i]);
        uni += __builtin_popcountll(a.bits[i] | b.bits[i]);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// 1 - mean pairwise Tanimoto over all unordered pairs.
inline double diversity(const std::vector<Fingerprint>& fps) {
    const size_t n = fps.size();
    if (n < 2) fail(Errc::TooFew, "diversity needs at least 2 molecules");
    double acc = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            acc += tanimoto(fps[i], fps[j]);
            ++pairs;
        }
    return 1.0 - acc / static_cast<double>(pairs);
}

inline double diversity_of(const std::vector<MolGraph>& mols, int radius = 2, int width = 2048) {
    std::vector<Fingerprint> fps;
    fps.reserve(mols.size());
    for (const auto& m : mols) fps.push_back(fingerprint(m, radius, width));
    return diversity(fps);
}

// IC50 ~ K_i = exp(dG / RT), dG in kcal/mol, result in molar units.
// R = 1.98720e-3 kcal/(mol K); T defaults to 310 K.
inline constexpr double kGasConstantKcal = 1.98720e-3;

inline double delta_g_to_ic50(double delta_g, double temperature = 310.0) {
    if (!(temperature > 0.0)) fail(Errc::OutOfRange, "temperature must be positive");
    if (!std::isfinite(delta_g)) fail(Errc::NonFiniteValue, "delta G must be finite");
    return std::exp(delta_g / (kGasConstantKcal * temperature));
}

// ---- set counters ----

struct SetCounters {
    long total = 0;
    long valid = 0;       // valence-valid, non-empty decodes
    long unique_count = 0;  // distinct canonical forms among valid
    long novel = 0;       // unique forms not present in the reference set
};

inline SetCounters count_set(const std::vector<MolGraph>& mols, const std::vector<MolGraph>& reference = {}) {
    SetCounters c;
    c.total = static_cast<long>(mols.size());
    std::set<std::string> ref;
    for (const auto& m : reference) ref.insert(chem::canonical_signature(m));
    std::set<std::string> seen;
    for (const auto& m : mols) {
        if (m.empty() || !m.valence_valid()) continue;
        ++c.valid;
        auto sig = chem::canonical_signature(m);
        if (seen.insert(sig).second) {
            ++c.unique_count;
            if (!ref.count(sig)) ++c.novel;
        }
    }
    return c;
}

}  // namespace sold::metrics
