// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// SELFIES dialect: tokenizer, derivation-state decoder and graph encoder.
//
// The decoder is a total function: ANY token list yields a valence-valid
// molecule (possibly empty). Requested bond orders are clipped to the
// remaining valence of both endpoints, and tokens that cannot apply in the
// current derivation state are skipped.
//
// Dialect summary (versioned as part of the vocabulary file):
//   * Atom tokens  [C] [=C] [#C] ... with optional explicit hydrogen count
//     and +1/-1 charge, e.g. [NH1+1]. The bond prefix is the requested
//     order of the bond to the current attachment atom.
//   * [Branch1]/[Branch2] open a side chain from the attachment atom. The
//     following 1 (Branch1) or 2 (Branch2) tokens are reinterpreted as an
//     integer Q through the digit table below; the branch body is the next
//     Q+1 tokens (truncated to what remains). The branch bond order is
//     min(branch prefix, first atom prefix). Applies only when the
//     attachment atom has at least 2 remaining valence.
//   * [Ring1]/[Ring2] bond the attachment atom to the atom placed Q+1
//     positions earlier (clamped to the first atom). Skipped when the pair
//     is already bonded or either endpoint is saturated.
//
// Digit table (any token not listed maps to 0):
//   [C]=0 [Ring1]=1 [Ring2]=2 [Branch1]=3 [=Branch1]=4 [#Branch1]=5
//   [Branch2]=6 [=Branch2]=7 [#Branch2]=8 [O]=9 [N]=10 [=N]=11 [=C]=12
//   [#C]=13 [S]=14 [P]=15

#pragma once

#include <string>
#include <vector>

#include "sold/molgraph.hpp"
#include "sold/smiles.hpp"

namespace sold::selfies {

using chem::Elem;
using chem::MolGraph;

enum class TokenKind : uint8_t { Atom, Branch, Ring };

struct Token {
    TokenKind kind = TokenKind::Atom;
    uint8_t order = 1;      // bond prefix: 1 none, 2 '=', 3 '#'
    Elem element = Elem::C; // Atom only
    int8_t charge = 0;      // Atom only
    int8_t explicit_h = -1; // Atom only; -1 = fill to default valence
    uint8_t size_class = 1; // Branch/Ring only: 1 or 2

    bool operator==(const Token&) const = default;
};

inline Token atom_token(Elem e, int order = 1, int charge = 0, int explicit_h = -1) {
    Token t;
    t.kind = TokenKind::Atom;
    t.order = static_cast<uint8_t>(order);
    t.element = e;
    t.charge = static_cast<int8_t>(charge);
    t.explicit_h = static_cast<int8_t>(explicit_h);
    return t;
}

inline Token branch_token(int size_class, int order = 1) {
    Token t;
    t.kind = TokenKind::Branch;
    t.size_class = static_cast<uint8_t>(size_class);
    t.order = static_cast<uint8_t>(order);
    return t;
}

inline Token ring_token(int size_class, int order = 1) {
    Token t;
    t.kind = TokenKind::Ring;
    t.size_class = static_cast<uint8_t>(size_class);
    t.order = static_cast<uint8_t>(order);
    return t;
}

// --- surface form ---

inline std::string to_surface(const Token& t) {
    std::string s = "[";
    if (t.order == 2) s += '=';
    if (t.order == 3) s += '#';
    if (t.kind == TokenKind::Branch) {
        s += "Branch";
        s += static_cast<char>('0' + t.size_class);
    } else if (t.kind == TokenKind::Ring) {
        s += "Ring";
        s += static_cast<char>('0' + t.size_class);
    } else {
        s += chem::symbol_of(t.element);
        if (t.explicit_h >= 0) {
            s += 'H';
            s += static_cast<char>('0' + t.explicit_h);
        }
        if (t.charge > 0) s += "+1";
        if (t.charge < 0) s += "-1";
    }
    s += ']';
    return s;
}

inline std::string detokenize(const std::vector<Token>& tokens) {
    std::string s;
    for (const auto& t : tokens) s += to_surface(t);
    return s;
}

// Parses one bracket body (no surrounding brackets). Throws UnknownSymbol.
inline Token parse_token_body(const std::string& body) {
    if (body.empty()) fail(Errc::MalformedBracket, "empty token");
    size_t pos = 0;
    int order = 1;
    if (body[pos] == '=') {
        order = 2;
        ++pos;
    } else if (body[pos] == '#') {
        order = 3;
        ++pos;
    }
    auto rest = body.substr(pos);
    if (rest == "Branch1") return branch_token(1, order);
    if (rest == "Branch2") return branch_token(2, order);
    if (rest == "Ring1") return ring_token(1, order);
    if (rest == "Ring2") return ring_token(2, order);

    Elem elem;
    size_t p = 0;
    if (rest.size() >= 2 && chem::element_from_symbol(rest.substr(0, 2), elem) &&
        std::islower(static_cast<unsigned char>(rest[1]))) {
        p = 2;
    } else if (!rest.empty() && chem::element_from_symbol(rest.substr(0, 1), elem)) {
        p = 1;
    } else {
        fail(Errc::UnknownSymbol, "unknown SELFIES token [" + body + "]");
    }
    int explicit_h = -1;
    int charge = 0;
    if (p < rest.size() && rest[p] == 'H') {
        ++p;
        if (p >= rest.size() || !std::isdigit(static_cast<unsigned char>(rest[p])))
            fail(Errc::UnknownSymbol, "hydrogen count needs a digit in [" + body + "]");
        explicit_h = rest[p] - '0';
        ++p;
    }
    if (p < rest.size() && (rest[p] == '+' || rest[p] == '-')) {
        int sign = rest[p] == '+' ? 1 : -1;
        ++p;
        if (p >= rest.size() || !std::isdigit(static_cast<unsigned char>(rest[p])))
            fail(Errc::UnknownSymbol, "charge needs a digit in [" + body + "]");
        int mag = rest[p] - '0';
        ++p;
        if (mag > 1) fail(Errc::UnknownSymbol, "charge magnitude above 1 in [" + body + "]");
        charge = sign * mag;
    }
    if (p != rest.size()) fail(Errc::UnknownSymbol, "unknown SELFIES token [" + body + "]");
    return atom_token(elem, order, charge, explicit_h);
}

inline std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> out;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '[') fail(Errc::MalformedBracket, "expected '[' at position " + std::to_string(i));
        size_t close = text.find(']', i);
        if (close == std::string::npos) fail(Errc::MalformedBracket, "unbalanced bracket");
        out.push_back(parse_token_body(text.substr(i + 1, close - i - 1)));
        i = close + 1;
    }
    return out;
}

// --- digit table ---

inline int digit_value(const Token& t) {
    if (t.kind == TokenKind::Ring) return t.order == 1 ? t.size_class : 0;
    if (t.kind == TokenKind::Branch) {
        int base = t.size_class == 1 ? 3 : 6;
        return base + (t.order - 1);
    }
    if (t.charge != 0 || t.explicit_h >= 0) return 0;
    switch (t.element) {
        case Elem::C: return t.order == 1 ? 0 : (t.order == 2 ? 12 : 13);
        case Elem::O: return t.order == 1 ? 9 : 0;
        case Elem::N: return t.order == 1 ? 10 : (t.order == 2 ? 11 : 0);
        case Elem::S: return t.order == 1 ? 14 : 0;
        case Elem::P: return t.order == 1 ? 15 : 0;
        default: return 0;
    }
}

// Canonical token for each digit 0..15 (used when emitting operands).
inline Token digit_token(int v) {
    switch (v) {
        case 0: return atom_token(Elem::C);
        case 1: return ring_token(1, 1);
        case 2: return ring_token(2, 1);
        case 3: return branch_token(1, 1);
        case 4: return branch_token(1, 2);
        case 5: return branch_token(1, 3);
        case 6: return branch_token(2, 1);
        case 7: return branch_token(2, 2);
        case 8: return branch_token(2, 3);
        case 9: return atom_token(Elem::O);
        case 10: return atom_token(Elem::N);
        case 11: return atom_token(Elem::N, 2);
        case 12: return atom_token(Elem::C, 2);
        case 13: return atom_token(Elem::C, 3);
        case 14: return atom_token(Elem::S);
        case 15: return atom_token(Elem::P);
        default: fail(Errc::EncodeOverflow, "digit out of range");
    }
}

// --- decoder ---

namespace detail {

struct Builder {
    std::vector<Elem> elem;
    std::vector<int> charge;
    std::vector<int> explicit_h;  // -1 for "fill later"
    std::vector<int> remaining;   // remaining bond capacity
    std::vector<int> bond_sum;
    std::vector<std::array<int, 3>> bonds;
    std::vector<int> placement;  // placement order -> atom
    std::vector<int> place_of;   // atom -> placement index

    // Charges are clamped to the supported range so decode stays total even
    // over programmatically built tokens.
    static int clamp_charge(int q) { return q < -1 ? -1 : (q > 1 ? 1 : q); }

    int place_atom(const Token& t) {
        int q = clamp_charge(t.charge);
        int cap = chem::max_valence(t.element, q);
        int h = t.explicit_h;
        if (h >= 0) h = std::min(h, cap);
        int idx = static_cast<int>(elem.size());
        elem.push_back(t.element);
        charge.push_back(q);
        explicit_h.push_back(h);
        remaining.push_back(h >= 0 ? cap - h : cap);
        bond_sum.push_back(0);
        place_of.push_back(static_cast<int>(placement.size()));
        placement.push_back(idx);
        return idx;
    }

    bool bonded(int a, int b) const {
        for (const auto& e : bonds)
            if ((e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)) return true;
        return false;
    }

    void add_bond(int a, int b, int order) {
        bonds.push_back({a, b, order});
        remaining[a] -= order;
        remaining[b] -= order;
        bond_sum[a] += order;
        bond_sum[b] += order;
    }

    MolGraph finish() const {
        MolGraph g;
        for (size_t i = 0; i < elem.size(); ++i) {
            int h = explicit_h[i];
            if (h < 0) h = chem::default_implicit_h(elem[i], charge[i], bond_sum[i]);
            g.add_atom(elem[i], charge[i], h);
        }
        for (const auto& e : bonds) g.add_bond(e[0], e[1], e[2]);
        return g;
    }
};

// Reads `count` operand tokens ahead of `pos`. Returns false when the stream
// is too short (caller consumes what is there and skips the structure).
inline bool read_operand(const std::vector<Token>& toks, size_t& pos, size_t end, int count, int& q) {
    q = 0;
    for (int i = 0; i < count; ++i) {
        if (pos >= end) return false;
        q = q * 16 + digit_value(toks[pos]);
        ++pos;
    }
    return true;
}

// Derives tokens [pos, end) with the given attachment atom (-1 when nothing
// is placed yet at this level). `pending_order` caps the first bond placed
// at this level (branch prefix); 0 means no cap.
inline void derive(const std::vector<Token>& toks, size_t pos, size_t end, Builder& b, int attach,
                   int pending_order) {
    while (pos < end) {
        const Token& t = toks[pos];
        ++pos;
        if (t.kind == TokenKind::Atom) {
            if (attach < 0) {
                attach = b.place_atom(t);
                pending_order = 0;
                continue;
            }
            int cap = chem::max_valence(t.element, Builder::clamp_charge(t.charge));
            if (t.explicit_h >= 0) cap -= std::min<int>(t.explicit_h, cap);
            int order = std::min<int>(t.order, b.remaining[attach]);
            order = std::min(order, cap);
            if (pending_order > 0) order = std::min(order, pending_order);
            if (order <= 0) continue;  // cannot apply: skip
            int idx = b.place_atom(t);
            b.add_bond(attach, idx, order);
            attach = idx;
            pending_order = 0;
        } else if (t.kind == TokenKind::Branch) {
            int q = 0;
            bool ok = read_operand(toks, pos, end, t.size_class, q);
            if (!ok || attach < 0 || b.remaining[attach] < 2) continue;
            size_t len = std::min<size_t>(static_cast<size_t>(q) + 1, end - pos);
            derive(toks, pos, pos + len, b, attach, t.order);
            pos += len;
        } else {  // Ring
            int q = 0;
            bool ok = read_operand(toks, pos, end, t.size_class, q);
            if (!ok || attach < 0) continue;
            int back = b.place_of[attach] - (q + 1);
            if (back < 0) back = 0;
            int target = b.placement[back];
            if (target == attach || b.bonded(attach, target)) continue;
            int order = std::min<int>(t.order, std::min(b.remaining[attach], b.remaining[target]));
            if (order <= 0) continue;
            b.add_bond(attach, target, order);
        }
    }
}

}  // namespace detail

// Total by construction: never throws, and the result always passes the
// valence audit.
inline MolGraph decode(const std::vector<Token>& tokens) {
    detail::Builder b;
    detail::derive(tokens, 0, tokens.size(), b, -1, 0);
    return b.finish();
}

// --- encoder ---

namespace detail {

struct Emitter {
    const MolGraph* g;
    const chem::detail::Traversal* trav;
    std::vector<int> place_idx;  // atom -> preorder position
    std::vector<int> bond_sum;

    // Emits the atom token for `v` entered through a bond of order `order`
    // (0 for the root), then v's ring closures, then its children.
    std::vector<Token> subtree(int v, int order) const {
        std::vector<Token> out;
        const auto& a = g->atom(v);
        int autofill = chem::default_implicit_h(a.element, a.charge, bond_sum[v]);
        int expl = a.implicit_h == autofill ? -1 : a.implicit_h;
        out.push_back(atom_token(a.element, order == 0 ? 1 : order, a.charge, expl));

        for (auto [earlier, ring_order] : trav->ring_at[v]) {
            int q = place_idx[v] - place_idx[earlier] - 1;
            emit_indexed(out, ring_token(q <= 15 ? 1 : 2, ring_order), q);
        }

        const auto& kids = trav->children[v];
        auto adj_order = [&](int x, int y) {
            for (const auto& bd : g->bonds())
                if ((bd.a == x && bd.b == y) || (bd.a == y && bd.b == x)) return static_cast<int>(bd.order);
            return 1;
        };
        for (size_t c = 0; c < kids.size(); ++c) {
            int child = kids[c];
            int child_order = adj_order(v, child);
            auto body = subtree(child, child_order);
            if (c + 1 == kids.size()) {
                out.insert(out.end(), body.begin(), body.end());
            } else {
                int q = static_cast<int>(body.size()) - 1;
                emit_indexed(out, branch_token(q <= 15 ? 1 : 2, child_order), q);
                out.insert(out.end(), body.begin(), body.end());
            }
        }
        return out;
    }

    static void emit_indexed(std::vector<Token>& out, Token head, int q) {
        if (q > 255) fail(Errc::EncodeOverflow, "branch/ring span exceeds the two-digit operand range");
        out.push_back(head);
        if (head.size_class == 2) {
            out.push_back(digit_token(q / 16));
            out.push_back(digit_token(q % 16));
        } else {
            out.push_back(digit_token(q));
        }
    }
};

}  // namespace detail

// Seeded randomized spanning-tree encoding; decode(encode(g, s)) is
// isomorphic to g for every seed.
inline std::vector<Token> encode(const MolGraph& g, uint64_t seed) {
    if (g.empty()) return {};
    auto trav = chem::detail::random_traversal(g, seed);

    // Reject graphs with more than one component: the dialect has no
    // disconnection token.
    if (trav.order.size() != static_cast<size_t>(g.atom_count()))
        fail(Errc::UnsupportedFeature, "internal traversal error");
    int roots = 0;
    for (int v : trav.order)
        if (trav.parent[v] < 0) ++roots;
    if (roots > 1) fail(Errc::UnsupportedFeature, "disconnected graph has no SELFIES form in this dialect");

    detail::Emitter em;
    em.g = &g;
    em.trav = &trav;
    em.place_idx.assign(g.atom_count(), 0);
    for (size_t i = 0; i < trav.order.size(); ++i) em.place_idx[trav.order[i]] = static_cast<int>(i);
    em.bond_sum.assign(g.atom_count(), 0);
    for (const auto& b : g.bonds()) {
        em.bond_sum[b.a] += b.order;
        em.bond_sum[b.b] += b.order;
    }
    return em.subtree(trav.order[0], 0);
}

// --- versioned vocabulary ---

inline constexpr int kVocabVersion = 1;

// The fixed token universe used for the robustness harness and as the BPE
// base alphabet. Exotic explicit-H surface forms are accepted by the
// tokenizer but are not part of this set.
inline std::vector<Token> standard_vocabulary() {
    std::vector<Token> v;
    const Elem heavies[] = {Elem::B, Elem::C,  Elem::N,  Elem::O, Elem::F,
                            Elem::P, Elem::S, Elem::Cl, Elem::Br, Elem::I};
    for (Elem e : heavies)
        for (int o = 1; o <= 3; ++o) v.push_back(atom_token(e, o));
    v.push_back(atom_token(Elem::H));
    const std::pair<Elem, int> charged[] = {{Elem::C, 1}, {Elem::C, -1}, {Elem::N, 1}, {Elem::N, -1},
                                            {Elem::O, 1}, {Elem::O, -1}, {Elem::S, 1}, {Elem::S, -1},
                                            {Elem::P, 1}, {Elem::B, -1}};
    for (auto [e, q] : charged)
        for (int o = 1; o <= 3; ++o) v.push_back(atom_token(e, o, q));
    for (int s = 1; s <= 2; ++s)
        for (int o = 1; o <= 3; ++o) v.push_back(branch_token(s, o));
    for (int s = 1; s <= 2; ++s)
        for (int o = 1; o <= 3; ++o) v.push_back(ring_token(s, o));
    return v;
}

inline uint64_t vocabulary_hash() {
    std::string all;
    for (const auto& t : standard_vocabulary()) all += to_surface(t);
    return fnv1a64(all);
}

// Text dump of the vocabulary and the digit table, consumed by external
// tooling; format is versioned so corpora stay reproducible.
inline std::string vocabulary_text() {
    std::string out = "sold-selfies-vocab v" + std::to_string(kVocabVersion) + "\n";
    auto vocab = standard_vocabulary();
    out += "tokens " + std::to_string(vocab.size()) + "\n";
    for (const auto& t : vocab) out += to_surface(t) + "\n";
    out += "digits 16\n";
    for (int d = 0; d < 16; ++d) out += to_surface(digit_token(d)) + " " + std::to_string(d) + "\n";
    return out;
}

}  // namespace sold::selfies
