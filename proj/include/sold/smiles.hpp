// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Subset-SMILES reader and randomized writer. The subset covers bare
// organic-subset atoms, bracket atoms with charge and hydrogen count,
// bond symbols - = #, parenthesized branches and ring closures 0-9 / %nn.
// Aromatic lowercase, stereo, isotopes and disconnection dots are
// rejected as UnsupportedFeature.

#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sold/molgraph.hpp"
#include "sold/rng.hpp"

namespace sold::chem {

namespace detail {

struct PendingAtom {
    Elem elem;
    int charge = 0;
    int explicit_h = -1;  // -1: fill to default valence later
};

inline bool is_aromatic_lower(char c) {
    return c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' || c == 's';
}

// Parses one bracket atom body (between '[' and ']').
inline PendingAtom parse_bracket_body(const std::string& body) {
    if (body.empty()) fail(Errc::SyntaxError, "empty bracket atom");
    size_t pos = 0;
    if (std::isdigit(static_cast<unsigned char>(body[0])))
        fail(Errc::UnsupportedFeature, "isotope specifications are not supported");

    Elem elem;
    if (pos + 1 < body.size() && element_from_symbol(body.substr(pos, 2), elem) &&
        std::islower(static_cast<unsigned char>(body[pos + 1]))) {
        pos += 2;
    } else if (element_from_symbol(body.substr(pos, 1), elem)) {
        pos += 1;
    } else if (is_aromatic_lower(body[pos])) {
        fail(Errc::UnsupportedFeature, "aromatic atoms are not supported");
    } else {
        fail(Errc::SyntaxError, "unknown element in bracket atom: " + body);
    }

    PendingAtom a{elem, 0, 0};  // bracket atoms default to zero hydrogens
    if (pos < body.size() && body[pos] == 'H') {
        ++pos;
        int h = 1;
        if (pos < body.size() && std::isdigit(static_cast<unsigned char>(body[pos]))) {
            h = body[pos] - '0';
            ++pos;
        }
        a.explicit_h = h;
    } else {
        a.explicit_h = 0;
    }
    if (pos < body.size() && (body[pos] == '+' || body[pos] == '-')) {
        int sign = body[pos] == '+' ? 1 : -1;
        ++pos;
        int mag = 1;
        if (pos < body.size() && std::isdigit(static_cast<unsigned char>(body[pos]))) {
            mag = body[pos] - '0';
            ++pos;
        } else if (pos < body.size() && (body[pos] == '+' || body[pos] == '-')) {
            fail(Errc::UnsupportedFeature, "charge magnitude above 1 is not supported");
        }
        if (mag > 1) fail(Errc::UnsupportedFeature, "charge magnitude above 1 is not supported");
        a.charge = sign * mag;
    }
    if (pos < body.size()) {
        if (body[pos] == '@') fail(Errc::UnsupportedFeature, "stereo markers are not supported");
        if (body[pos] == ':') fail(Errc::UnsupportedFeature, "atom maps are not supported");
        fail(Errc::SyntaxError, "trailing characters in bracket atom: " + body);
    }
    return a;
}

}  // namespace detail

inline MolGraph parse_smiles_subset(const std::string& text) {
    MolGraph g;
    // Bonds are deferred so hydrogens can be filled once per atom at the end.
    struct RawAtom {
        detail::PendingAtom spec;
        bool bare;
    };
    std::vector<RawAtom> raw;
    std::vector<std::array<int, 3>> edges;  // a, b, order
    struct OpenRing {
        int atom;
        int order;  // 0: unspecified
    };
    std::map<int, OpenRing> rings;
    std::vector<int> stack;  // open-branch attachment points
    int prev = -1;
    int pending_order = 0;  // 0 means "default single"

    auto close_or_open_ring = [&](int number) {
        if (prev < 0) fail(Errc::SyntaxError, "ring closure before any atom");
        auto it = rings.find(number);
        if (it == rings.end()) {
            rings[number] = {prev, pending_order};
            pending_order = 0;
            return;
        }
        int order = 1;
        if (it->second.order != 0 && pending_order != 0 && it->second.order != pending_order)
            fail(Errc::SyntaxError, "conflicting ring bond orders");
        if (it->second.order != 0) order = it->second.order;
        if (pending_order != 0) order = pending_order;
        edges.push_back({it->second.atom, prev, order});
        rings.erase(it);
        pending_order = 0;
    };

    auto push_atom = [&](detail::PendingAtom spec, bool bare) {
        raw.push_back({spec, bare});
        int idx = static_cast<int>(raw.size()) - 1;
        if (prev >= 0) edges.push_back({prev, idx, pending_order == 0 ? 1 : pending_order});
        pending_order = 0;
        prev = idx;
    };

    size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (c == ' ' || c == '\t') {
            ++i;
            continue;
        }
        if (c == '-' || c == '=' || c == '#') {
            if (pending_order != 0) fail(Errc::SyntaxError, "two consecutive bond symbols");
            pending_order = c == '-' ? 1 : (c == '=' ? 2 : 3);
            ++i;
            continue;
        }
        if (c == '(') {
            if (prev < 0) fail(Errc::SyntaxError, "branch before any atom");
            if (pending_order != 0) fail(Errc::SyntaxError, "bond symbol before branch open");
            stack.push_back(prev);
            ++i;
            continue;
        }
        if (c == ')') {
            if (stack.empty()) fail(Errc::SyntaxError, "unbalanced parentheses");
            if (pending_order != 0) fail(Errc::SyntaxError, "dangling bond symbol");
            prev = stack.back();
            stack.pop_back();
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            close_or_open_ring(c - '0');
            ++i;
            continue;
        }
        if (c == '%') {
            if (i + 2 >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i + 1])) ||
                !std::isdigit(static_cast<unsigned char>(text[i + 2])))
                fail(Errc::SyntaxError, "%% ring closure needs two digits");
            close_or_open_ring((text[i + 1] - '0') * 10 + (text[i + 2] - '0'));
            i += 3;
            continue;
        }
        if (c == '[') {
            size_t close = text.find(']', i);
            if (close == std::string::npos) fail(Errc::SyntaxError, "unterminated bracket atom");
            push_atom(detail::parse_bracket_body(text.substr(i + 1, close - i - 1)), false);
            i = close + 1;
            continue;
        }
        if (c == '.') fail(Errc::UnsupportedFeature, "disconnected components are not supported");
        if (c == '/' || c == '\\' || c == '@')
            fail(Errc::UnsupportedFeature, "stereo markers are not supported");
        if (c == '*') fail(Errc::UnsupportedFeature, "wildcard atoms are not supported");
        if (detail::is_aromatic_lower(c))
            fail(Errc::UnsupportedFeature, "aromatic atoms are not supported");

        Elem elem;
        if (i + 1 < text.size() && element_from_symbol(text.substr(i, 2), elem) &&
            std::islower(static_cast<unsigned char>(text[i + 1]))) {
            i += 2;
        } else if (element_from_symbol(text.substr(i, 1), elem)) {
            i += 1;
        } else {
            fail(Errc::SyntaxError, std::string("unexpected character '") + c + "'");
        }
        if (elem == Elem::H) fail(Errc::SyntaxError, "hydrogen must be written as a bracket atom");
        push_atom({elem, 0, -1}, true);
    }

    if (!stack.empty()) fail(Errc::SyntaxError, "unbalanced parentheses");
    if (!rings.empty()) fail(Errc::SyntaxError, "dangling ring bond");
    if (pending_order != 0) fail(Errc::SyntaxError, "dangling bond symbol");

    // Materialize: explicit bond sums first, then hydrogens.
    std::vector<int> bond_sum(raw.size(), 0);
    for (const auto& e : edges) {
        bond_sum[e[0]] += e[2];
        bond_sum[e[1]] += e[2];
    }
    for (size_t a = 0; a < raw.size(); ++a) {
        const auto& r = raw[a];
        int h = r.spec.explicit_h;
        if (r.bare) h = default_implicit_h(r.spec.elem, r.spec.charge, bond_sum[a]);
        if (bond_sum[a] + h > max_valence(r.spec.elem, r.spec.charge))
            fail(Errc::ValenceError,
                 std::string("valence exceeded on ") + symbol_of(r.spec.elem) + " atom " + std::to_string(a));
        g.add_atom(r.spec.elem, r.spec.charge, h);
    }
    for (const auto& e : edges) g.add_bond(e[0], e[1], e[2]);
    return g;
}

namespace detail {

inline bool bare_emittable(const Atom& a, int bond_sum) {
    if (a.element == Elem::H || a.charge != 0) return false;
    return a.implicit_h == default_implicit_h(a.element, a.charge, bond_sum);
}

inline std::string atom_text(const Atom& a, int bond_sum) {
    if (bare_emittable(a, bond_sum)) return symbol_of(a.element);
    std::string s = "[";
    s += symbol_of(a.element);
    if (a.implicit_h > 0) {
        s += 'H';
        s += static_cast<char>('0' + a.implicit_h);
    }
    if (a.charge > 0) s += "+1";
    if (a.charge < 0) s += "-1";
    s += ']';
    return s;
}

inline const char* bond_text(int order) { return order == 2 ? "=" : (order == 3 ? "#" : ""); }

// Seeded DFS over the graph: random root, shuffled neighbor order. Returns
// the traversal as parent/children structure plus the cycle (back) edges.
struct Traversal {
    std::vector<int> order;                          // visit order -> atom index
    std::vector<std::vector<int>> children;          // per atom, in emission order
    std::vector<int> parent;                         // -1 for roots
    std::vector<std::vector<std::pair<int, int>>> ring_at;  // atom -> (other endpoint, order), at later endpoint
};

inline Traversal random_traversal(const MolGraph& g, uint64_t seed) {
    Rng rng(seed);
    const int n = g.atom_count();
    auto adj = g.adjacency();
    Traversal t;
    t.children.resize(n);
    t.parent.assign(n, -1);
    t.ring_at.resize(n);
    std::vector<int> visit_rank(n, -1);
    std::vector<int> roots(n);
    for (int i = 0; i < n; ++i) roots[i] = i;
    rng.shuffle(roots);

    std::vector<std::pair<int, int>> seen_edges;  // canonical (min,max)
    auto edge_seen = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        for (auto& e : seen_edges)
            if (e.first == a && e.second == b) return true;
        seen_edges.push_back({a, b});
        return false;
    };

    for (int root : roots) {
        if (visit_rank[root] >= 0) continue;
        // Iterative DFS, preserving per-node shuffled neighbor order.
        std::vector<std::pair<int, size_t>> stack;
        auto enter = [&](int u) {
            visit_rank[u] = static_cast<int>(t.order.size());
            t.order.push_back(u);
            rng.shuffle(adj[u]);
            stack.push_back({u, 0});
        };
        enter(root);
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            if (next >= adj[u].size()) {
                stack.pop_back();
                continue;
            }
            auto [v, order] = adj[u][next++];
            if (visit_rank[v] < 0) {
                edge_seen(u, v);
                t.parent[v] = u;
                t.children[u].push_back(v);
                enter(v);
            } else if (v != t.parent[u] && !edge_seen(u, v)) {
                // Back edge; attach the closure to the later-visited endpoint.
                // (DFS can discover it from the ancestor when it resumes after
                // the descendant's subtree, so pick by visit rank.)
                int later = visit_rank[u] > visit_rank[v] ? u : v;
                int earlier = later == u ? v : u;
                t.ring_at[later].push_back({earlier, order});
            }
        }
    }
    return t;
}

}  // namespace detail

// Randomized subset-SMILES writer. The traversal root and neighbor order are
// drawn from `seed`; re-parsing the output yields a graph isomorphic to `g`.
inline std::string write_smiles(const MolGraph& g, uint64_t seed) {
    if (g.empty()) return "";
    auto t = detail::random_traversal(g, seed);

    auto adj = g.adjacency();
    auto order_of_edge = [&](int a, int b) {
        for (auto [v, o] : adj[a])
            if (v == b) return o;
        return 1;
    };

    // Ring-closure numbers: allocate the smallest free number at the earlier
    // endpoint, release when closed.
    std::vector<int> bond_sum(g.atom_count(), 0);
    for (const auto& b : g.bonds()) {
        bond_sum[b.a] += b.order;
        bond_sum[b.b] += b.order;
    }

    std::map<std::pair<int, int>, int> ring_number;  // (later, earlier) -> number
    std::vector<bool> number_used(100, false);
    std::vector<int> visit_rank(g.atom_count(), -1);
    for (size_t r = 0; r < t.order.size(); ++r) visit_rank[t.order[r]] = static_cast<int>(r);

    auto ring_token = [&](int number) {
        std::string s;
        if (number < 10)
            s += static_cast<char>('0' + number);
        else {
            s += '%';
            s += static_cast<char>('0' + number / 10);
            s += static_cast<char>('0' + number % 10);
        }
        return s;
    };

    std::string out;
    // Emit recursively following the traversal. Ring closures at the earlier
    // endpoint are discovered by scanning ring_at of later endpoints once.
    std::vector<std::vector<std::pair<int, int>>> ring_open_at(g.atom_count());  // atom -> (later endpoint, order)
    for (int u = 0; u < g.atom_count(); ++u)
        for (auto [earlier, order] : t.ring_at[u]) ring_open_at[earlier].push_back({u, order});

    struct Frame {
        int atom;
        size_t child = 0;
        bool opened_paren = false;
    };

    auto emit_atom = [&](int u) {
        // open ring numbers for closures whose earlier endpoint is u
        out += detail::atom_text(g.atom(u), bond_sum[u]);
        for (auto [later, order] : ring_open_at[u]) {
            int num = 0;
            while (num < 100 && number_used[num]) ++num;
            if (num == 100) fail(Errc::EncodeOverflow, "more than 100 simultaneously open ring bonds");
            number_used[num] = true;
            ring_number[{later, u}] = num;
            out += detail::bond_text(order);
            out += ring_token(num);
        }
        // close rings ending at u (earlier endpoint already emitted)
        for (auto [earlier, order] : t.ring_at[u]) {
            auto it = ring_number.find({u, earlier});
            out += ring_token(it->second);
            number_used[it->second] = false;
            ring_number.erase(it);
        }
    };

    std::vector<bool> emitted(g.atom_count(), false);
    for (int root_atom : t.order) {
        if (emitted[root_atom]) continue;
        if (!out.empty()) fail(Errc::EncodeOverflow, "disconnected graphs cannot be written as subset SMILES");
        std::vector<Frame> stack;
        emit_atom(root_atom);
        emitted[root_atom] = true;
        stack.push_back({root_atom});
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.child >= t.children[f.atom].size()) {
                if (f.opened_paren) out += ')';
                stack.pop_back();
                continue;
            }
            int c = t.children[f.atom][f.child++];
            bool last = f.child == t.children[f.atom].size();
            Frame nf{c};
            if (!last) {
                out += '(';
                nf.opened_paren = true;
            }
            out += detail::bond_text(order_of_edge(f.atom, c));
            emit_atom(c);
            emitted[c] = true;
            stack.push_back(nf);
        }
    }
    return out;
}

}  // namespace sold::chem
