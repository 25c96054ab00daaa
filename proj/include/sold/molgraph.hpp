// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Molecular graphs over a fixed element set with explicit Kekulé bond
// orders, a valence audit enforced at construction time, canonical-form
// isomorphism, and the two natively computed descriptors (exact molecular
// weight, Balaban J).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sold/error.hpp"
#include "sold/rng.hpp"

namespace sold::chem {

enum class Elem : uint8_t { B, C, N, O, F, P, S, Cl, Br, I, H, Count };

constexpr int kElemCount = static_cast<int>(Elem::Count);

struct ElementInfo {
    const char* symbol;
    // Allowed valences for the neutral atom, ascending. Implicit hydrogens
    // fill to the smallest entry that covers the explicit bond sum.
    std::array<int, 3> valences;
    int valence_count;
    // Monoisotopic mass, unified atomic mass units (IUPAC), 5 decimals.
    double monoisotopic_mass;
};

inline constexpr std::array<ElementInfo, kElemCount> kElements = {{
    {"B", {3, 0, 0}, 1, 11.00931},
    {"C", {4, 0, 0}, 1, 12.00000},
    {"N", {3, 5, 0}, 2, 14.00307},
    {"O", {2, 0, 0}, 1, 15.99491},
    {"F", {1, 0, 0}, 1, 18.99840},
    {"P", {3, 5, 0}, 2, 30.97376},
    {"S", {2, 4, 6}, 3, 31.97207},
    {"Cl", {1, 0, 0}, 1, 34.96885},
    {"Br", {1, 0, 0}, 1, 78.91834},
    {"I", {1, 0, 0}, 1, 126.90447},
    {"H", {1, 0, 0}, 1, 1.00783},
}};

inline const ElementInfo& element_info(Elem e) { return kElements[static_cast<int>(e)]; }

inline const char* symbol_of(Elem e) { return element_info(e).symbol; }

// Longest-match symbol lookup ("Cl" before "C"). Returns false on unknown.
inline bool element_from_symbol(std::string_view sym, Elem& out) {
    for (int i = 0; i < kElemCount; ++i) {
        if (sym == kElements[i].symbol) {
            out = static_cast<Elem>(i);
            return true;
        }
    }
    return false;
}

// Valence set for a charged atom. Only charges -1, 0, +1 are supported;
// the table below is the whole contract, anything missing is an error.
inline std::vector<int> allowed_valences(Elem e, int charge) {
    if (charge == 0) {
        const auto& info = element_info(e);
        return std::vector<int>(info.valences.begin(), info.valences.begin() + info.valence_count);
    }
    if (charge != 1 && charge != -1)
        fail(Errc::UnsupportedFeature, std::string("unsupported formal charge on ") + symbol_of(e));
    switch (e) {
        case Elem::B: return charge < 0 ? std::vector<int>{4} : std::vector<int>{2};
        case Elem::C: return std::vector<int>{3};
        case Elem::N: return charge < 0 ? std::vector<int>{2} : std::vector<int>{4};
        case Elem::O: return charge < 0 ? std::vector<int>{1} : std::vector<int>{3};
        case Elem::P: return charge < 0 ? std::vector<int>{2} : std::vector<int>{4};
        case Elem::S: return charge < 0 ? std::vector<int>{1} : std::vector<int>{3, 5};
        case Elem::F:
        case Elem::Cl:
        case Elem::Br:
        case Elem::I: return charge < 0 ? std::vector<int>{0} : std::vector<int>{2};
        case Elem::H: return std::vector<int>{0};
        default: break;
    }
    fail(Errc::UnsupportedFeature, "unsupported element/charge combination");
}

inline int max_valence(Elem e, int charge) {
    auto v = allowed_valences(e, charge);
    return v.empty() ? 0 : v.back();
}

// Smallest allowed valence that covers `bonds`; falls back to the largest.
inline int smallest_fitting_valence(Elem e, int charge, int bonds) {
    auto v = allowed_valences(e, charge);
    for (int x : v)
        if (x >= bonds) return x;
    return v.empty() ? 0 : v.back();
}

// Hydrogens to add to a bare atom with the given explicit bond sum.
inline int default_implicit_h(Elem e, int charge, int bonds) {
    return std::max(0, smallest_fitting_valence(e, charge, bonds) - bonds);
}

struct Atom {
    Elem element = Elem::C;
    int8_t charge = 0;
    uint8_t implicit_h = 0;
};

struct Bond {
    uint16_t a = 0;
    uint16_t b = 0;
    uint8_t order = 1;  // 1, 2, or 3
};

class MolGraph {
public:
    MolGraph() = default;

    int add_atom(Elem e, int charge = 0, int implicit_h = 0) {
        if (implicit_h < 0) fail(Errc::ValenceError, "negative implicit hydrogen count");
        if (implicit_h > max_valence(e, charge))
            fail(Errc::ValenceError, std::string("hydrogen count exceeds valence of ") + symbol_of(e));
        atoms_.push_back({e, static_cast<int8_t>(charge), static_cast<uint8_t>(implicit_h)});
        return static_cast<int>(atoms_.size()) - 1;
    }

    void add_bond(int a, int b, int order) {
        if (a < 0 || b < 0 || a >= atom_count() || b >= atom_count())
            fail(Errc::SyntaxError, "bond index out of range");
        if (a == b) fail(Errc::SyntaxError, "self bond");
        if (order < 1 || order > 3) fail(Errc::ValenceError, "bond order must be 1, 2 or 3");
        for (const auto& bd : bonds_)
            if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
                fail(Errc::SyntaxError, "duplicate bond");
        if (bond_order_sum(a) + atoms_[a].implicit_h + order > max_valence(atoms_[a].element, atoms_[a].charge))
            fail(Errc::ValenceError, std::string("valence exceeded on atom ") + std::to_string(a));
        if (bond_order_sum(b) + atoms_[b].implicit_h + order > max_valence(atoms_[b].element, atoms_[b].charge))
            fail(Errc::ValenceError, std::string("valence exceeded on atom ") + std::to_string(b));
        bonds_.push_back({static_cast<uint16_t>(a), static_cast<uint16_t>(b), static_cast<uint8_t>(order)});
    }

    void set_implicit_h(int a, int h) {
        if (h < 0 || bond_order_sum(a) + h > max_valence(atoms_[a].element, atoms_[a].charge))
            fail(Errc::ValenceError, "hydrogen count exceeds remaining valence");
        atoms_[a].implicit_h = static_cast<uint8_t>(h);
    }

    int atom_count() const { return static_cast<int>(atoms_.size()); }
    int bond_count() const { return static_cast<int>(bonds_.size()); }
    bool empty() const { return atoms_.empty(); }

    const Atom& atom(int i) const { return atoms_[i]; }
    const Bond& bond(int i) const { return bonds_[i]; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<Bond>& bonds() const { return bonds_; }

    int bond_order_sum(int i) const {
        int s = 0;
        for (const auto& b : bonds_)
            if (b.a == i || b.b == i) s += b.order;
        return s;
    }

    bool has_bond(int a, int b) const {
        for (const auto& bd : bonds_)
            if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) return true;
        return false;
    }

    // (neighbor, order) lists, index-aligned with atoms.
    std::vector<std::vector<std::pair<int, int>>> adjacency() const {
        std::vector<std::vector<std::pair<int, int>>> adj(atoms_.size());
        for (const auto& b : bonds_) {
            adj[b.a].push_back({b.b, b.order});
            adj[b.b].push_back({b.a, b.order});
        }
        return adj;
    }

    // Full invariant check. Construction already enforces these; this is the
    // independent audit used by the robustness harness.
    bool valence_valid() const {
        for (int i = 0; i < atom_count(); ++i) {
            const auto& a = atoms_[i];
            if (a.charge < -1 || a.charge > 1) return false;
            if (bond_order_sum(i) + a.implicit_h > max_valence(a.element, a.charge)) return false;
        }
        for (const auto& b : bonds_) {
            if (b.a >= atoms_.size() || b.b >= atoms_.size() || b.a == b.b) return false;
            if (b.order < 1 || b.order > 3) return false;
        }
        for (size_t i = 0; i < bonds_.size(); ++i)
            for (size_t j = i + 1; j < bonds_.size(); ++j) {
                bool same = (bonds_[i].a == bonds_[j].a && bonds_[i].b == bonds_[j].b) ||
                            (bonds_[i].a == bonds_[j].b && bonds_[i].b == bonds_[j].a);
                if (same) return false;
            }
        return true;
    }

private:
    std::vector<Atom> atoms_;
    std::vector<Bond> bonds_;
};

// --- descriptors ---

// Sum of monoisotopic masses over all atoms including implicit hydrogens.
inline double exact_mol_wt(const MolGraph& g) {
    double w = 0.0;
    const double h_mass = element_info(Elem::H).monoisotopic_mass;
    for (const auto& a : g.atoms()) {
        w += element_info(a.element).monoisotopic_mass;
        w += h_mass * a.implicit_h;
    }
    return w;
}

// Balaban J over the hydrogen-suppressed graph:
//   J = M/(mu+1) * sum over edges (i,j) of (s_i * s_j)^(-1/2)
// with s_i the distance-matrix row sums, M the heavy-atom bond count and
// mu = M - N + 1 the cyclomatic number.
inline double balaban_j(const MolGraph& g) {
    std::vector<int> heavy;
    std::vector<int> heavy_index(g.atom_count(), -1);
    for (int i = 0; i < g.atom_count(); ++i)
        if (g.atom(i).element != Elem::H) {
            heavy_index[i] = static_cast<int>(heavy.size());
            heavy.push_back(i);
        }
    const int n = static_cast<int>(heavy.size());
    if (n < 2) fail(Errc::TooSmall, "Balaban J needs at least 2 heavy atoms");

    std::vector<std::pair<int, int>> edges;  // heavy-index pairs
    std::vector<std::vector<int>> adj(n);
    for (const auto& b : g.bonds()) {
        int ha = heavy_index[b.a], hb = heavy_index[b.b];
        if (ha < 0 || hb < 0) continue;
        edges.push_back({ha, hb});
        adj[ha].push_back(hb);
        adj[hb].push_back(ha);
    }
    const int m = static_cast<int>(edges.size());

    // BFS row sums of the topological distance matrix.
    std::vector<double> s(n, 0.0);
    for (int src = 0; src < n; ++src) {
        std::vector<int> dist(n, -1);
        std::vector<int> queue{src};
        dist[src] = 0;
        for (size_t qi = 0; qi < queue.size(); ++qi) {
            int u = queue[qi];
            for (int v : adj[u])
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
        }
        for (int v = 0; v < n; ++v) {
            if (dist[v] < 0) fail(Errc::DisconnectedGraph, "Balaban J needs a connected heavy-atom graph");
            s[src] += dist[v];
        }
    }

    const int mu = m - n + 1;
    double acc = 0.0;
    for (const auto& [i, j] : edges) acc += 1.0 / std::sqrt(s[i] * s[j]);
    return static_cast<double>(m) / (mu + 1) * acc;
}

// --- canonical form / isomorphism ---
//
// Iterative neighborhood refinement (WL colors) followed by backtracking
// over the first non-singleton color class. The canonical signature is the
// lexicographically smallest serialization over all tried labelings;
// two graphs are isomorphic iff their signatures match.

namespace detail {

inline std::vector<uint64_t> initial_colors(const MolGraph& g) {
    std::vector<uint64_t> c(g.atom_count());
    for (int i = 0; i < g.atom_count(); ++i) {
        const auto& a = g.atom(i);
        uint64_t h = 0xcbf29ce484222325ULL;
        unsigned char bytes[3] = {static_cast<unsigned char>(a.element),
                                  static_cast<unsigned char>(a.charge + 8),
                                  static_cast<unsigned char>(a.implicit_h)};
        h = fnv1a64(bytes, 3, h);
        c[i] = h;
    }
    return c;
}

inline void refine_colors(const MolGraph& g,
                          const std::vector<std::vector<std::pair<int, int>>>& adj,
                          std::vector<uint64_t>& colors) {
    const int n = g.atom_count();
    std::vector<uint64_t> next(n);
    for (int round = 0; round < n + 2; ++round) {
        for (int i = 0; i < n; ++i) {
            std::vector<uint64_t> nb;
            nb.reserve(adj[i].size());
            for (auto [j, order] : adj[i])
                nb.push_back(colors[j] * 7919u + static_cast<uint64_t>(order));
            std::sort(nb.begin(), nb.end());
            uint64_t h = colors[i];
            for (uint64_t x : nb) h = fnv1a64(&x, sizeof(x), h);
            next[i] = h;
        }
        if (next == colors) break;
        colors = next;
    }
}

inline int count_classes(const std::vector<uint64_t>& colors) {
    auto s = colors;
    std::sort(s.begin(), s.end());
    return static_cast<int>(std::unique(s.begin(), s.end()) - s.begin());
}

inline std::string serialize_with_order(const MolGraph& g, const std::vector<int>& order) {
    // order[i] = canonical rank of atom i
    const int n = g.atom_count();
    std::vector<int> inv(n);
    for (int i = 0; i < n; ++i) inv[order[i]] = i;
    std::string out;
    out.reserve(static_cast<size_t>(n) * 6 + g.bond_count() * 8);
    for (int r = 0; r < n; ++r) {
        const auto& a = g.atom(inv[r]);
        out.push_back(static_cast<char>('A' + static_cast<int>(a.element)));
        out.push_back(static_cast<char>('0' + a.charge + 2));
        out.push_back(static_cast<char>('0' + a.implicit_h));
    }
    std::vector<std::array<int, 3>> edges;
    edges.reserve(g.bond_count());
    for (const auto& b : g.bonds()) {
        int ra = order[b.a], rb = order[b.b];
        if (ra > rb) std::swap(ra, rb);
        edges.push_back({ra, rb, b.order});
    }
    std::sort(edges.begin(), edges.end());
    for (const auto& e : edges) {
        out.push_back('|');
        out += std::to_string(e[0]);
        out.push_back(',');
        out += std::to_string(e[1]);
        out.push_back(',');
        out += std::to_string(e[2]);
    }
    return out;
}

inline void canonical_search(const MolGraph& g,
                             const std::vector<std::vector<std::pair<int, int>>>& adj,
                             std::vector<uint64_t> colors, std::string& best, long& budget) {
    const int n = g.atom_count();
    refine_colors(g, adj, colors);

    // Find the first non-singleton class (ordered by color value, then index).
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return colors[a] != colors[b] ? colors[a] < colors[b] : a < b;
    });

    int cell_start = -1, cell_end = -1;
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n && colors[idx[j]] == colors[idx[i]]) ++j;
        if (j - i > 1) {
            cell_start = i;
            cell_end = j;
            break;
        }
        i = j;
    }

    if (cell_start < 0) {
        // Discrete partition: ranks follow the color order.
        std::vector<int> order(n);
        for (int r = 0; r < n; ++r) order[idx[r]] = r;
        std::string sig = serialize_with_order(g, order);
        if (best.empty() || sig < best) best = sig;
        return;
    }

    for (int k = cell_start; k < cell_end && budget > 0; ++k) {
        --budget;
        auto branch = colors;
        branch[idx[k]] ^= 0x9e3779b97f4a7c15ULL;  // individualize
        canonical_search(g, adj, branch, best, budget);
    }
}

}  // namespace detail

inline std::string canonical_signature(const MolGraph& g) {
    if (g.empty()) return "";
    auto adj = g.adjacency();
    auto colors = detail::initial_colors(g);
    std::string best;
    long budget = 200000;  // molecules here are small; this is never the bound in practice
    detail::canonical_search(g, adj, colors, best, budget);
    return best;
}

inline bool isomorphic(const MolGraph& a, const MolGraph& b) {
    if (a.atom_count() != b.atom_count() || a.bond_count() != b.bond_count()) return false;
    return canonical_signature(a) == canonical_signature(b);
}

}  // namespace sold::chem
