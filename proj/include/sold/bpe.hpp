// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Byte-pair encoder over the SELFIES token alphabet. Merges operate within
// molecule boundaries, ids 0 and 1 are reserved for PAD and UNK, and the
// whole vocabulary (reserved + base + merges) never exceeds 256 entries.

#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sold/error.hpp"
#include "sold/rng.hpp"
#include "sold/selfies.hpp"

namespace sold::bpe {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kFormatVersion = 1;

struct BpeVocab {
    std::vector<std::string> base_symbols;          // ids 2 .. 2+N-1
    std::vector<std::pair<int, int>> merges;        // ids of the merged pair, training order
    std::vector<std::string> surfaces;              // id -> surface (PAD/UNK sentinels included)
    std::unordered_map<std::string, int> base_ids;  // base surface -> id

    int size() const { return static_cast<int>(surfaces.size()); }
    int merged_id(int merge_index) const { return 2 + static_cast<int>(base_symbols.size()) + merge_index; }

    uint64_t base_hash() const {
        std::string all;
        for (const auto& s : base_symbols) all += s;
        return fnv1a64(all);
    }

    // id -> base token surfaces. PAD, UNK and out-of-vocabulary ids expand
    // to nothing, which keeps generated id streams decodable even when the
    // model's logit head is wider than the trained vocabulary.
    std::vector<std::string> expand(int id) const {
        if (id <= kUnkId || id >= size()) return {};
        int first_merge = 2 + static_cast<int>(base_symbols.size());
        if (id < first_merge) return {base_symbols[id - 2]};
        auto [a, b] = merges[id - first_merge];
        auto out = expand(a);
        auto rhs = expand(b);
        out.insert(out.end(), rhs.begin(), rhs.end());
        return out;
    }
};

inline BpeVocab make_vocab(std::vector<std::string> base_symbols) {
    BpeVocab v;
    v.base_symbols = std::move(base_symbols);
    v.surfaces = {"<pad>", "<unk>"};
    for (const auto& s : v.base_symbols) {
        v.base_ids[s] = static_cast<int>(v.surfaces.size());
        v.surfaces.push_back(s);
    }
    return v;
}

inline std::vector<std::string> standard_base_alphabet() {
    std::vector<std::string> out;
    for (const auto& t : selfies::standard_vocabulary()) out.push_back(selfies::to_surface(t));
    return out;
}

namespace detail {

inline void apply_merge(std::vector<int>& seq, int a, int b, int merged) {
    size_t w = 0;
    for (size_t r = 0; r < seq.size();) {
        if (r + 1 < seq.size() && seq[r] == a && seq[r + 1] == b) {
            seq[w++] = merged;
            r += 2;
        } else {
            seq[w++] = seq[r++];
        }
    }
    seq.resize(w);
}

}  // namespace detail

// Greedy most-frequent-pair training. Ties break lexicographically on the
// (left surface, right surface) pair; merging stops when no pair occurs at
// least twice or the vocabulary reaches target_size.
inline BpeVocab train(const std::vector<std::vector<std::string>>& corpus, int target_size = 256,
                      std::vector<std::string> base_alphabet = standard_base_alphabet()) {
    if (corpus.empty()) fail(Errc::EmptyCorpus, "BPE training corpus is empty");
    if (target_size < static_cast<int>(base_alphabet.size()) + 2)
        fail(Errc::TargetTooSmall, "target size below base alphabet + reserved ids");
    if (target_size > 256) fail(Errc::TargetTooSmall, "vocabulary is capped at 256 entries");

    BpeVocab vocab = make_vocab(std::move(base_alphabet));
    std::vector<std::vector<int>> seqs(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        seqs[i].reserve(corpus[i].size());
        for (const auto& tok : corpus[i]) {
            auto it = vocab.base_ids.find(tok);
            seqs[i].push_back(it == vocab.base_ids.end() ? kUnkId : it->second);
        }
    }

    while (vocab.size() < target_size) {
        std::map<std::pair<int, int>, long> counts;
        for (const auto& s : seqs)
            for (size_t i = 0; i + 1 < s.size(); ++i) {
                if (s[i] <= kUnkId || s[i + 1] <= kUnkId) continue;
                ++counts[{s[i], s[i + 1]}];
            }
        std::pair<int, int> best{-1, -1};
        long best_count = 0;
        for (const auto& [pair, count] : counts) {
            if (count < 2 || count < best_count) continue;  // a pair must occur at least twice
            if (best.first < 0 || count > best_count) {
                best = pair;
                best_count = count;
                continue;
            }
            auto key = std::make_pair(vocab.surfaces[pair.first], vocab.surfaces[pair.second]);
            auto best_key = std::make_pair(vocab.surfaces[best.first], vocab.surfaces[best.second]);
            if (key < best_key) best = pair;
        }
        if (best.first < 0) break;

        int merged = vocab.size();
        vocab.merges.push_back(best);
        vocab.surfaces.push_back(vocab.surfaces[best.first] + vocab.surfaces[best.second]);
        for (auto& s : seqs) detail::apply_merge(s, best.first, best.second, merged);
    }
    return vocab;
}

// Unknown base tokens map to UNK; output length never exceeds input length.
inline std::vector<int> encode(const std::vector<std::string>& tokens, const BpeVocab& vocab) {
    std::vector<int> seq;
    seq.reserve(tokens.size());
    for (const auto& t : tokens) {
        auto it = vocab.base_ids.find(t);
        seq.push_back(it == vocab.base_ids.end() ? kUnkId : it->second);
    }
    for (size_t m = 0; m < vocab.merges.size(); ++m)
        detail::apply_merge(seq, vocab.merges[m].first, vocab.merges[m].second, vocab.merged_id(static_cast<int>(m)));
    return seq;
}

inline std::vector<std::string> decode(const std::vector<int>& ids, const BpeVocab& vocab) {
    std::vector<std::string> out;
    for (int id : ids) {
        auto part = vocab.expand(id);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

// Fixed-length padding; sequences longer than max_len are dropped from the
// dataset (the caller counts them).
inline std::optional<std::vector<int>> pad_or_drop(std::vector<int> ids, int max_len = 128) {
    if (static_cast<int>(ids.size()) > max_len) return std::nullopt;
    ids.resize(max_len, kPadId);
    return ids;
}

// --- vocabulary file ---
// line 1: header with format version and base alphabet hash
// then base symbols, then merges in training order (tab separated).

inline std::string serialize(const BpeVocab& v) {
    std::ostringstream os;
    os << "sold-bpe-vocab v" << kFormatVersion << " base-hash=" << std::hex << v.base_hash() << std::dec << "\n";
    os << "base " << v.base_symbols.size() << "\n";
    for (const auto& s : v.base_symbols) os << s << "\n";
    os << "merges " << v.merges.size() << "\n";
    for (auto [a, b] : v.merges) os << v.surfaces[a] << "\t" << v.surfaces[b] << "\n";
    return os.str();
}

inline BpeVocab deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("sold-bpe-vocab v", 0) != 0)
        fail(Errc::IoError, "not a sold BPE vocabulary file");
    std::string word;
    size_t n = 0;
    std::istringstream h2;
    if (!std::getline(is, line)) fail(Errc::IoError, "truncated vocabulary file");
    h2.str(line);
    h2 >> word >> n;
    if (word != "base") fail(Errc::IoError, "expected base section");
    std::vector<std::string> base;
    base.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) fail(Errc::IoError, "truncated base section");
        base.push_back(line);
    }
    BpeVocab v = make_vocab(std::move(base));
    if (!std::getline(is, line)) fail(Errc::IoError, "truncated vocabulary file");
    std::istringstream h3(line);
    h3 >> word >> n;
    if (word != "merges") fail(Errc::IoError, "expected merges section");
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) fail(Errc::IoError, "truncated merges section");
        auto tab = line.find('\t');
        if (tab == std::string::npos) fail(Errc::IoError, "malformed merge line");
        std::string a = line.substr(0, tab), b = line.substr(tab + 1);
        auto find_id = [&](const std::string& s) {
            for (int id = 2; id < v.size(); ++id)
                if (v.surfaces[id] == s) return id;
            fail(Errc::IoError, "merge references unknown symbol: " + s);
        };
        int ia = find_id(a), ib = find_id(b);
        v.merges.push_back({ia, ib});
        v.surfaces.push_back(v.surfaces[ia] + v.surfaces[ib]);
    }
    return v;
}

}  // namespace sold::bpe
