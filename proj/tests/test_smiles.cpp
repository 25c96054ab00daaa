// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>
#include <string>

#include "sold/smiles.hpp"

using namespace sold;
using namespace sold::chem;

TEST_CASE("single atoms fill hydrogens to the default valence") {
    auto g = parse_smiles_subset("C");
    REQUIRE(g.atom_count() == 1);
    CHECK(g.atom(0).element == Elem::C);
    CHECK(g.atom(0).implicit_h == 4);

    CHECK(parse_smiles_subset("N").atom(0).implicit_h == 3);
    CHECK(parse_smiles_subset("Cl").atom(0).implicit_h == 1);
    CHECK(parse_smiles_subset("S").atom(0).implicit_h == 2);
}

TEST_CASE("bonds consume valence") {
    auto g = parse_smiles_subset("C=O");
    REQUIRE(g.atom_count() == 2);
    REQUIRE(g.bond_count() == 1);
    CHECK(g.bond(0).order == 2);
    CHECK(g.atom(0).implicit_h == 2);  // C valence 4 minus the double bond
    CHECK(g.atom(1).implicit_h == 0);

    auto triple = parse_smiles_subset("C#N");
    CHECK(triple.atom(0).implicit_h == 1);
    CHECK(triple.atom(1).implicit_h == 0);
}

TEST_CASE("ring closures") {
    auto g = parse_smiles_subset("C1CC1");
    CHECK(g.atom_count() == 3);
    CHECK(g.bond_count() == 3);
    for (int i = 0; i < 3; ++i) CHECK(g.atom(i).implicit_h == 2);

    auto pct = parse_smiles_subset("C%12CC%12");
    CHECK(isomorphic(g, pct));

    auto benzene = parse_smiles_subset("C1=CC=CC=C1");
    CHECK(benzene.atom_count() == 6);
    CHECK(benzene.bond_count() == 6);
    int doubles = 0;
    for (int i = 0; i < 6; ++i) doubles += benzene.bond(i).order == 2;
    CHECK(doubles == 3);
}

TEST_CASE("bracket atoms carry charge and hydrogen count") {
    auto g = parse_smiles_subset("[NH4+1]");
    CHECK(g.atom(0).charge == 1);
    CHECK(g.atom(0).implicit_h == 4);

    auto o = parse_smiles_subset("[O-]");
    CHECK(o.atom(0).charge == -1);
    CHECK(o.atom(0).implicit_h == 0);

    auto salt = parse_smiles_subset("C[N+1](C)(C)C");
    CHECK(salt.atom_count() == 5);
    CHECK(salt.atom(1).charge == 1);
    CHECK(salt.atom(1).implicit_h == 0);
}

TEST_CASE("unsupported features are rejected, not silently accepted") {
    CHECK_THROWS_AS(parse_smiles_subset("c1ccccc1"), Error);   // aromatic
    CHECK_THROWS_AS(parse_smiles_subset("C/C=C/C"), Error);    // stereo bond
    CHECK_THROWS_AS(parse_smiles_subset("[C@H](N)C"), Error);  // stereo center
    CHECK_THROWS_AS(parse_smiles_subset("[13C]"), Error);      // isotope
    CHECK_THROWS_AS(parse_smiles_subset("CC.CC"), Error);      // disconnection
    CHECK_THROWS_AS(parse_smiles_subset("[Fe]"), Error);       // outside element set

    auto checks = [](const std::string& s, Errc code) {
        try {
            parse_smiles_subset(s);
            return false;
        } catch (const Error& e) {
            return e.code() == code;
        }
    };
    CHECK(checks("c1ccccc1", Errc::UnsupportedFeature));
    CHECK(checks("C(C", Errc::SyntaxError));
    CHECK(checks("C1CC", Errc::SyntaxError));
    CHECK(checks("C=", Errc::SyntaxError));
    CHECK(checks("C(=O)(=O)(=O)=O", Errc::ValenceError));
}

TEST_CASE("writer round-trips through the parser for every seed") {
    const char* cases[] = {"C",          "CCO",         "C1CC1",      "C1=CC=CC=C1", "CC(C)(C)C",
                           "[NH4+1]",    "C[N+1](C)(C)C", "O=C(O)CN", "C#CC1CC1CO",  "ClC(Br)I"};
    for (const char* smi : cases) {
        auto g = parse_smiles_subset(smi);
        for (uint64_t seed = 0; seed < 8; ++seed) {
            auto text = write_smiles(g, seed);
            auto back = parse_smiles_subset(text);
            CAPTURE(smi);
            CAPTURE(text);
            CHECK(isomorphic(g, back));
        }
    }
}

TEST_CASE("writer randomization produces distinct but equivalent strings") {
    auto g = parse_smiles_subset("CCO");
    std::set<std::string> variants;
    for (uint64_t seed = 0; seed < 16; ++seed) variants.insert(write_smiles(g, seed));
    CHECK(variants.size() > 1);
    for (const auto& v : variants) CHECK(isomorphic(g, parse_smiles_subset(v)));
}

TEST_CASE("single carbon writes as C for any seed") {
    auto g = parse_smiles_subset("C");
    for (uint64_t seed = 0; seed < 5; ++seed) CHECK(write_smiles(g, seed) == "C");
}

TEST_CASE("cyclopropane emits exactly one ring-closure digit pair") {
    auto g = parse_smiles_subset("C1CC1");
    for (uint64_t seed = 0; seed < 5; ++seed) {
        auto s = write_smiles(g, seed);
        int digits = 0;
        for (char c : s) digits += std::isdigit(static_cast<unsigned char>(c)) ? 1 : 0;
        CHECK(digits == 2);  // cycle rank 1 forces one opened+closed number
    }
}
