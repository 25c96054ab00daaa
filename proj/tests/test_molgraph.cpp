// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "sold/molgraph.hpp"

using namespace sold;
using namespace sold::chem;

namespace {

MolGraph chain(int n) {
    MolGraph g;
    for (int i = 0; i < n; ++i) g.add_atom(Elem::C, 0, i == 0 || i == n - 1 ? 3 : 2);
    for (int i = 0; i + 1 < n; ++i) g.add_bond(i, i + 1, 1);
    return g;
}

}  // namespace

TEST_CASE("valence audit rejects violating constructions") {
    MolGraph g;
    int a = g.add_atom(Elem::C, 0, 0);
    int b = g.add_atom(Elem::O, 0, 0);
    g.add_bond(a, b, 2);
    CHECK(g.valence_valid());

    int c = g.add_atom(Elem::O, 0, 0);
    CHECK_THROWS_AS(g.add_bond(b, c, 1), Error);          // oxygen already saturated
    CHECK_THROWS_AS(g.add_bond(a, a, 1), Error);          // self bond
    CHECK_THROWS_AS(g.add_bond(a, b, 1), Error);          // duplicate
    CHECK_THROWS_AS(g.add_atom(Elem::C, 0, 5), Error);    // too many hydrogens
}

TEST_CASE("exact molecular weight sums monoisotopic masses") {
    // Oracle: independent sums over the IUPAC mass table.
    const double mc = 12.00000, mh = 1.00783, mo = 15.99491;

    MolGraph methane;
    methane.add_atom(Elem::C, 0, 4);
    CHECK(exact_mol_wt(methane) == doctest::Approx(mc + 4 * mh).epsilon(1e-9));
    CHECK(exact_mol_wt(methane) == doctest::Approx(16.0313).epsilon(1e-5));

    MolGraph empty;
    CHECK(exact_mol_wt(empty) == 0.0);

    MolGraph ethanol;  // CCO
    ethanol.add_atom(Elem::C, 0, 3);
    ethanol.add_atom(Elem::C, 0, 2);
    ethanol.add_atom(Elem::O, 0, 1);
    ethanol.add_bond(0, 1, 1);
    ethanol.add_bond(1, 2, 1);
    CHECK(exact_mol_wt(ethanol) == doctest::Approx(2 * mc + 6 * mh + mo).epsilon(1e-9));
    CHECK(exact_mol_wt(ethanol) == doctest::Approx(46.0419).epsilon(1e-5));
}

TEST_CASE("exact molecular weight is permutation invariant") {
    MolGraph a;  // C(=O)O written in two atom orders
    a.add_atom(Elem::C, 0, 1);
    a.add_atom(Elem::O, 0, 0);
    a.add_atom(Elem::O, 0, 1);
    a.add_bond(0, 1, 2);
    a.add_bond(0, 2, 1);

    MolGraph b;
    b.add_atom(Elem::O, 0, 1);
    b.add_atom(Elem::O, 0, 0);
    b.add_atom(Elem::C, 0, 1);
    b.add_bond(2, 1, 2);
    b.add_bond(2, 0, 1);

    CHECK(exact_mol_wt(a) == doctest::Approx(exact_mol_wt(b)).epsilon(1e-12));
}

TEST_CASE("Balaban J matches hand-evaluated formula") {
    // Propane: distance row sums (3,2,3), M=2, mu=0 -> 2*(2/sqrt(6)).
    auto propane = chain(3);
    CHECK(balaban_j(propane) == doctest::Approx(2.0 * 2.0 / std::sqrt(6.0)).epsilon(1e-9));
    CHECK(balaban_j(propane) == doctest::Approx(1.6330).epsilon(1e-4));

    // Ethane: single edge, s=(1,1), mu=0 -> 1/(0+1) * 1/sqrt(1*1) = 1.
    auto ethane = chain(2);
    CHECK(balaban_j(ethane) == doctest::Approx(1.0).epsilon(1e-12));

    // Cyclopropane: M=3, mu=1, s=(2,2,2) -> (3/2)*3*(1/2) = 2.25.
    MolGraph cp;
    for (int i = 0; i < 3; ++i) cp.add_atom(Elem::C, 0, 2);
    cp.add_bond(0, 1, 1);
    cp.add_bond(1, 2, 1);
    cp.add_bond(2, 0, 1);
    CHECK(balaban_j(cp) == doctest::Approx(2.25).epsilon(1e-12));
}

TEST_CASE("Balaban J error paths") {
    MolGraph single;
    single.add_atom(Elem::C, 0, 4);
    CHECK_THROWS_AS(balaban_j(single), Error);

    MolGraph water;  // implicit hydrogens only; single heavy atom
    water.add_atom(Elem::O, 0, 2);
    CHECK_THROWS_AS(balaban_j(water), Error);
}

TEST_CASE("Balaban J ignores explicit hydrogens and is isomorphism invariant") {
    auto a = chain(4);
    // Same butane with atoms in a different order and an explicit hydrogen.
    MolGraph b;
    b.add_atom(Elem::C, 0, 2);  // inner
    b.add_atom(Elem::C, 0, 3);  // end
    b.add_atom(Elem::C, 0, 2);  // inner (one H made explicit)
    b.add_atom(Elem::C, 0, 3);  // end
    b.add_bond(1, 0, 1);
    b.add_bond(0, 2, 1);
    b.add_bond(2, 3, 1);
    CHECK(balaban_j(a) == doctest::Approx(balaban_j(b)).epsilon(1e-12));

    MolGraph c;  // propane with an explicit H atom attached
    c.add_atom(Elem::C, 0, 3);
    c.add_atom(Elem::C, 0, 2);
    c.add_atom(Elem::C, 0, 2);
    c.add_atom(Elem::H, 0, 0);
    c.add_bond(0, 1, 1);
    c.add_bond(1, 2, 1);
    c.add_bond(2, 3, 1);
    CHECK(balaban_j(c) == doctest::Approx(balaban_j(chain(3))).epsilon(1e-12));
}

TEST_CASE("canonical signature detects isomorphism across relabelings") {
    MolGraph a;  // isobutane
    a.add_atom(Elem::C, 0, 1);
    a.add_atom(Elem::C, 0, 3);
    a.add_atom(Elem::C, 0, 3);
    a.add_atom(Elem::C, 0, 3);
    a.add_bond(0, 1, 1);
    a.add_bond(0, 2, 1);
    a.add_bond(0, 3, 1);

    MolGraph b;  // same graph, center last
    b.add_atom(Elem::C, 0, 3);
    b.add_atom(Elem::C, 0, 3);
    b.add_atom(Elem::C, 0, 3);
    b.add_atom(Elem::C, 0, 1);
    b.add_bond(3, 0, 1);
    b.add_bond(3, 1, 1);
    b.add_bond(3, 2, 1);

    CHECK(isomorphic(a, b));
    CHECK_FALSE(isomorphic(a, chain(4)));  // isobutane vs n-butane

    // Same skeleton, different charge state.
    MolGraph c = a;
    MolGraph d;
    d.add_atom(Elem::C, 0, 1);
    d.add_atom(Elem::C, 0, 3);
    d.add_atom(Elem::C, 0, 3);
    d.add_atom(Elem::C, -1, 2);
    d.add_bond(0, 1, 1);
    d.add_bond(0, 2, 1);
    d.add_bond(0, 3, 1);
    CHECK_FALSE(isomorphic(c, d));
}

TEST_CASE("canonical signature separates regioisomers with symmetric refinement") {
    // 1,2- vs 1,3-disubstituted cyclobutane style case: naive color counts agree.
    auto ring4 = [](std::vector<int> h) {
        MolGraph g;
        for (int i = 0; i < 4; ++i) g.add_atom(Elem::C, 0, h[i]);
        for (int i = 0; i < 4; ++i) g.add_bond(i, (i + 1) % 4, 1);
        return g;
    };
    MolGraph adj = ring4({1, 1, 2, 2});
    MolGraph opp = ring4({1, 2, 1, 2});
    // attach fluorines to the h==1 carbons
    for (MolGraph* g : {&adj, &opp})
        for (int i = 0; i < 4; ++i)
            if (g->atom(i).implicit_h == 1) {
                int f = g->add_atom(Elem::F, 0, 0);
                g->add_bond(i, f, 1);
            }
    CHECK_FALSE(isomorphic(adj, opp));
    CHECK(isomorphic(adj, adj));
}
