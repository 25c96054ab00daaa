// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Orchestration: corpus ingestion (parse -> randomized SMILES -> SELFIES
// tokens -> BPE -> fixed-length padding), the two-phase encoder training
// (reconstruction-only pretraining, then balanced multi-task training),
// diffusion training in the CDF-normalized latent space, and generation.
// One master seed fixes every random draw end to end.

#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sold/bpe.hpp"
#include "sold/checkpoint.hpp"
#include "sold/config.hpp"
#include "sold/diffusion.hpp"
#include "sold/latent_transform.hpp"
#include "sold/metrics.hpp"
#include "sold/models.hpp"
#include "sold/multitask.hpp"
#include "sold/selfies.hpp"
#include "sold/smiles.hpp"

namespace sold::pipeline {

// ---- ingestion ----

struct IngestStats {
    long total_lines = 0;
    long parse_failed = 0;
    long dropped_overlength = 0;
    long accepted = 0;
    uint64_t corpus_hash = 0;
    uint64_t vocab_hash = 0;
    std::vector<std::string> target_names;
    std::vector<double> target_mean;
    std::vector<double> target_std;
};

struct Dataset {
    std::vector<std::vector<int>> ids;        // padded to seq_len
    std::vector<std::vector<double>> targets; // standardized, aligned with target_names
    std::vector<std::string> selfies_text;
    nn::Tensor<float> conditioning;           // (accepted, cond_dim) when present
    bool has_conditioning = false;
    IngestStats stats;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(Errc::IoError, "cannot open: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        out.push_back(line);
    }
    return out;
}

// Descriptor CSV: header "id,<name>,<name>,..."; id is the zero-based index
// of the molecule among the corpus' non-comment lines.
struct DescriptorTable {
    std::vector<std::string> names;
    std::map<long, std::vector<double>> rows;
};

inline DescriptorTable read_descriptors(const std::string& path) {
    DescriptorTable t;
    auto lines = read_lines(path);
    if (lines.empty()) fail(Errc::IoError, "empty descriptor CSV");
    std::istringstream hs(lines[0]);
    std::string cell;
    bool first = true;
    while (std::getline(hs, cell, ',')) {
        if (first) {
            if (cell != "id") fail(Errc::IoError, "descriptor CSV must start with an id column");
            first = false;
        } else {
            t.names.push_back(cell);
        }
    }
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::istringstream ls(lines[i]);
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != t.names.size() + 1) fail(Errc::IoError, "ragged descriptor CSV row");
        std::vector<double> vals;
        for (size_t j = 1; j < cells.size(); ++j) vals.push_back(std::stod(cells[j]));
        t.rows[std::stol(cells[0])] = std::move(vals);
    }
    return t;
}

inline chem::MolGraph parse_any(const std::string& line) {
    // SELFIES lines are bracket-only; bracket-atom SMILES also start with
    // '[', so try the SELFIES reading first and fall back.
    if (!line.empty() && line[0] == '[') {
        try {
            return selfies::decode(selfies::tokenize(line));
        } catch (const Error&) {
        }
    }
    return chem::parse_smiles_subset(line);
}

}  // namespace detail

// Native descriptor pair; Balaban J falls back to 0 for graphs where it is
// undefined (single heavy atom). Values are standardized later.
inline std::vector<double> native_targets(const chem::MolGraph& g) {
    double bj = 0.0;
    try {
        bj = chem::balaban_j(g);
    } catch (const Error&) {
    }
    return {chem::exact_mol_wt(g), bj};
}

inline const std::vector<std::string>& native_target_names() {
    static const std::vector<std::string> names = {"exact_mol_wt", "balaban_j"};
    return names;
}

inline Dataset ingest(const std::string& corpus_path, const bpe::BpeVocab& vocab, const RunConfig& cfg,
                      const std::string& descriptor_csv = "", const std::string& embedding_path = "") {
    Dataset ds;
    ds.stats.vocab_hash = fnv1a64(bpe::serialize(vocab));
    ds.stats.target_names = native_target_names();

    std::optional<detail::DescriptorTable> desc;
    if (!descriptor_csv.empty()) {
        desc = detail::read_descriptors(descriptor_csv);
        for (const auto& n : desc->names) ds.stats.target_names.push_back(n);
    }
    nn::Tensor<float> emb;
    if (!embedding_path.empty()) {
        emb = io::read_embeddings(embedding_path);
        if (emb.dim(1) != cfg.cond_dim)
            fail(Errc::CheckpointIncompatible, "embedding dim " + std::to_string(emb.dim(1)) +
                                                   " != cond_dim " + std::to_string(cfg.cond_dim));
        ds.has_conditioning = true;
    }

    Rng seed_stream = Rng::derive(cfg.master_seed, "ingest");
    std::vector<std::vector<double>> raw_targets;
    std::vector<long> kept_rows;
    uint64_t corpus_hash = 0xcbf29ce484222325ULL;

    long molecule_index = -1;  // index among non-comment lines
    for (const auto& line : detail::read_lines(corpus_path)) {
        if (line.empty() || line[0] == '#') continue;
        ++molecule_index;
        ++ds.stats.total_lines;
        const uint64_t mol_seed = seed_stream.next_u64();
        chem::MolGraph graph;
        std::vector<selfies::Token> toks;
        try {
            graph = detail::parse_any(line);
            if (graph.empty()) fail(Errc::SyntaxError, "empty molecule");
            // randomize the SMILES form, re-read, then encode (seeded)
            auto randomized = chem::write_smiles(graph, mol_seed);
            graph = chem::parse_smiles_subset(randomized);
            toks = selfies::encode(graph, mol_seed ^ 0x517cc1b727220a95ULL);
        } catch (const Error&) {
            ++ds.stats.parse_failed;
            continue;
        }
        std::vector<std::string> surfaces;
        surfaces.reserve(toks.size());
        for (const auto& t : toks) surfaces.push_back(selfies::to_surface(t));
        auto encoded = bpe::encode(surfaces, vocab);
        auto padded = bpe::pad_or_drop(encoded, static_cast<int>(cfg.seq_len));
        if (!padded) {
            ++ds.stats.dropped_overlength;
            continue;
        }
        auto t = native_targets(graph);
        if (desc) {
            auto it = desc->rows.find(molecule_index);
            if (it == desc->rows.end()) {
                ++ds.stats.parse_failed;  // descriptor row missing: treated as unusable
                continue;
            }
            for (double v : it->second) t.push_back(v);
        }
        ds.ids.push_back(std::move(*padded));
        raw_targets.push_back(std::move(t));
        ds.selfies_text.push_back(selfies::detokenize(toks));
        kept_rows.push_back(molecule_index);
        corpus_hash = fnv1a64(ds.selfies_text.back(), corpus_hash);
    }
    ds.stats.accepted = static_cast<long>(ds.ids.size());
    ds.stats.corpus_hash = corpus_hash;
    if (ds.stats.accepted == 0) fail(Errc::EmptyCorpus, "no molecules survived ingestion");

    // standardize targets to zero mean, unit variance
    const size_t K = raw_targets.front().size();
    ds.stats.target_mean.assign(K, 0.0);
    ds.stats.target_std.assign(K, 0.0);
    for (const auto& row : raw_targets)
        for (size_t k = 0; k < K; ++k) ds.stats.target_mean[k] += row[k];
    for (auto& m : ds.stats.target_mean) m /= static_cast<double>(raw_targets.size());
    for (const auto& row : raw_targets)
        for (size_t k = 0; k < K; ++k) {
            const double d = row[k] - ds.stats.target_mean[k];
            ds.stats.target_std[k] += d * d;
        }
    for (auto& s : ds.stats.target_std) s = std::sqrt(std::max(s / static_cast<double>(raw_targets.size()), 1e-12));
    ds.targets = std::move(raw_targets);
    for (auto& row : ds.targets)
        for (size_t k = 0; k < K; ++k) row[k] = (row[k] - ds.stats.target_mean[k]) / ds.stats.target_std[k];

    if (ds.has_conditioning) {
        if (emb.dim(0) <= kept_rows.back())
            fail(Errc::CheckpointIncompatible, "embedding file has fewer rows than the corpus");
        nn::Tensor<float> kept({ds.stats.accepted, cfg.cond_dim});
        for (long i = 0; i < ds.stats.accepted; ++i)
            std::memcpy(kept.data() + i * cfg.cond_dim, emb.data() + kept_rows[static_cast<size_t>(i)] * cfg.cond_dim,
                        sizeof(float) * static_cast<size_t>(cfg.cond_dim));
        ds.conditioning = std::move(kept);
    }
    return ds;
}

inline std::string manifest_text(const Dataset& ds, const RunConfig& cfg) {
    std::ostringstream os;
    os << "total=" << ds.stats.total_lines << "\n";
    os << "accepted=" << ds.stats.accepted << "\n";
    os << "parse_failed=" << ds.stats.parse_failed << "\n";
    os << "dropped_overlength=" << ds.stats.dropped_overlength << "\n";
    os << std::hex << "corpus_hash=" << ds.stats.corpus_hash << "\n";
    os << "vocab_hash=" << ds.stats.vocab_hash << "\n" << std::dec;
    os << "config_hash=" << std::hex << config_hash(cfg) << std::dec << "\n";
    for (size_t k = 0; k < ds.stats.target_names.size(); ++k)
        os << "target." << ds.stats.target_names[k] << "=" << ds.stats.target_mean[k] << ","
           << ds.stats.target_std[k] << "\n";
    return os.str();
}

// ---- encoder training ----

struct EncoderTrainLog {
    std::vector<double> lr_trace;                       // per epoch
    std::vector<std::vector<double>> task_losses;       // per epoch, [recon, tasks...]
    double final_token_accuracy = 0.0;
};

inline double cosine_lr(double lr0, long epoch, long total) {
    if (total <= 1) return lr0;
    return lr0 * 0.5 * (1.0 + std::cos(3.141592653589793 * static_cast<double>(epoch) / static_cast<double>(total)));
}

// Training-set token accuracy (argmax over the decoder head, PAD included).
template <typename S>
double token_accuracy(models::MolecularAutoencoder<S>& model, const Dataset& ds) {
    const long L = model.config().seq_len;
    long hit = 0, total = 0;
    for (const auto& ids : ds.ids) {
        auto latent = model.encode_tensor(ids);
        auto out = model.decode_tokens(latent.reshaped({L, model.config().dim}));
        for (long i = 0; i < L; ++i) {
            hit += out[static_cast<size_t>(i)] == ids[static_cast<size_t>(i)];
            ++total;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(std::max<long>(total, 1));
}

namespace detail {

template <typename S>
std::vector<S> flatten_grads(const models::BoundAutoencoder<S>& bound, const std::vector<int>& indices) {
    std::vector<S> out;
    for (int idx : indices) {
        auto* n = bound.leaves[static_cast<size_t>(idx)].node;
        if (n->has_grad) {
            for (long i = 0; i < n->grad.numel(); ++i) out.push_back(n->grad[i]);
        } else {
            out.insert(out.end(), static_cast<size_t>(n->value.numel()), S(0));
        }
    }
    return out;
}

template <typename S>
void apply_update(models::MolecularAutoencoder<S>& model, const std::vector<int>& indices,
                  const std::vector<S>& update) {
    size_t pos = 0;
    for (int idx : indices) {
        auto& p = model.params()[static_cast<size_t>(idx)];
        for (long i = 0; i < p.value.numel(); ++i) p.value[i] -= update[pos++];
    }
    if (pos != update.size()) fail(Errc::ShapeMismatch, "update size mismatch");
}

template <typename S>
long group_size(const models::MolecularAutoencoder<S>& model, const std::vector<int>& indices) {
    long n = 0;
    for (int idx : indices) n += model.params()[static_cast<size_t>(idx)].value.numel();
    return n;
}

}  // namespace detail

// Trains the autoencoder in place. Phase 1 (epochs < pretrain_epochs):
// reconstruction only, plain Adam. Phase 2: reconstruction + K descriptor
// tasks through the dual balancer (reconstruction participates as a task
// unless balance_reconstruction is off). Cosine-annealed learning rate over
// the whole schedule. `start_epoch` supports bitwise-identical resume.
template <typename S>
EncoderTrainLog train_encoder(models::MolecularAutoencoder<S>& model, mtl::DualBalancer<S>& balancer,
                              nn::Adam<S>& pretrain_opt, const Dataset& ds, const RunConfig& cfg,
                              long start_epoch = 0, long end_epoch = -1) {
    using namespace nn::ops;
    const long N = ds.stats.accepted;
    const long L = cfg.seq_len;
    const long K = static_cast<long>(ds.stats.target_names.size());
    if (model.config().task_heads != K) fail(Errc::ShapeMismatch, "task head count != dataset targets");
    EncoderTrainLog log;

    std::vector<int> order(static_cast<size_t>(N));
    const long stop = end_epoch < 0 ? cfg.encoder_epochs : end_epoch;

    for (long epoch = start_epoch; epoch < stop; ++epoch) {
        const double lr = cosine_lr(cfg.encoder_lr, epoch, cfg.encoder_epochs);
        log.lr_trace.push_back(lr);
        // identity order re-shuffled per epoch: resume reproduces any epoch
        // without replaying history
        for (long i = 0; i < N; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
        Rng shuffle_rng = Rng::derive(cfg.master_seed, "enc-epoch", static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        std::vector<double> epoch_losses(static_cast<size_t>(K) + 1, 0.0);
        long batches = 0;
        for (long start = 0; start < N; start += cfg.batch_size) {
            const long B = std::min<long>(cfg.batch_size, N - start);
            std::vector<int> ids;
            ids.reserve(static_cast<size_t>(B * L));
            nn::Tensor<S> targets({B, K});
            for (long b = 0; b < B; ++b) {
                const int row = order[static_cast<size_t>(start + b)];
                ids.insert(ids.end(), ds.ids[static_cast<size_t>(row)].begin(), ds.ids[static_cast<size_t>(row)].end());
                for (long k = 0; k < K; ++k)
                    targets[b * K + k] = static_cast<S>(ds.targets[static_cast<size_t>(row)][static_cast<size_t>(k)]);
            }

            nn::Tape<S> tape;
            auto bound = model.bind(tape);
            auto latent = bound.encode(ids, B);
            auto logits = reshape(bound.decoder_logits(latent), {B * L, cfg.vocab_size});
            auto recon = softmax_cross_entropy(logits, ids);
            const double recon_value = recon.val()[0];
            if (!std::isfinite(recon_value)) fail(Errc::DivergenceDetected, "non-finite reconstruction loss");
            epoch_losses[0] += recon_value;

            if (epoch < cfg.pretrain_epochs) {
                tape.backward(recon);
                for (size_t i = 0; i < model.params().size(); ++i) {
                    auto* n = bound.leaves[i].node;
                    if (n->has_grad)
                        model.params()[i].grad = n->grad;
                    else
                        model.params()[i].zero_grad();
                }
                pretrain_opt.step(static_cast<S>(lr));
                ++batches;
                continue;
            }

            // Phase 2: per-task losses and their scalar values.
            std::vector<nn::Var<S>> losses;
            losses.push_back(recon);
            for (long k = 0; k < K; ++k) {
                nn::Tensor<S> tk({B, 1});
                for (long b = 0; b < B; ++b) tk[b] = targets[b * K + k];
                losses.push_back(mse_loss(bound.task_prediction(latent, static_cast<int>(k)), tk));
            }
            std::vector<double> loss_values;
            for (size_t k = 0; k < losses.size(); ++k) {
                const double v = losses[k].val()[0];
                if (!std::isfinite(v)) fail(Errc::DivergenceDetected, "non-finite task loss");
                epoch_losses[k] += v;
                loss_values.push_back(v);
            }

            const bool recon_balanced = cfg.balance_reconstruction;
            auto shared_nodes = bound.nodes_for(model.shared_indices());

            // First pass: per-task gradients over the shared trunk.
            std::vector<std::vector<S>> shared_grads;
            std::vector<double> balancer_losses;
            for (size_t k = recon_balanced ? 0 : 1; k < losses.size(); ++k) {
                tape.backward(losses[k], &shared_nodes);
                shared_grads.push_back(detail::flatten_grads(bound, model.shared_indices()));
                balancer_losses.push_back(loss_values[k]);
            }
            if (!recon_balanced) {
                // reconstruction keeps its own plain Adam step on trunk+head
                tape.backward(recon);
                for (size_t i = 0; i < model.params().size(); ++i) {
                    auto* n = bound.leaves[i].node;
                    if (n->has_grad)
                        model.params()[i].grad = n->grad;
                    else
                        model.params()[i].zero_grad();
                }
                pretrain_opt.step(static_cast<S>(lr));
            }
            auto update = balancer.shared_update(balancer_losses, shared_grads, lr);
            detail::apply_update(model, model.shared_indices(), update);

            // Second pass (recomputed as written): task-specific parameters.
            long task_slot = 0;
            if (recon_balanced) {
                auto head_nodes = bound.nodes_for(model.recon_head_indices());
                tape.backward(recon, &head_nodes);
                auto g = detail::flatten_grads(bound, model.recon_head_indices());
                auto upd = balancer.task_update(static_cast<int>(task_slot++), loss_values[0], g, lr);
                detail::apply_update(model, model.recon_head_indices(), upd);
            }
            for (long k = 0; k < K; ++k) {
                auto head_nodes = bound.nodes_for(model.task_head_indices(static_cast<int>(k)));
                tape.backward(losses[static_cast<size_t>(k) + 1], &head_nodes);
                auto g = detail::flatten_grads(bound, model.task_head_indices(static_cast<int>(k)));
                auto upd = balancer.task_update(static_cast<int>(task_slot++), loss_values[static_cast<size_t>(k) + 1],
                                                g, lr);
                detail::apply_update(model, model.task_head_indices(static_cast<int>(k)), upd);
            }
            ++batches;
        }
        for (auto& v : epoch_losses) v /= static_cast<double>(std::max<long>(batches, 1));
        log.task_losses.push_back(epoch_losses);
    }
    log.final_token_accuracy = token_accuracy(model, ds);
    return log;
}

// ---- diffusion training ----

struct DiffusionTrainLog {
    std::vector<double> simple_trace;  // per epoch
    std::vector<double> vlb_trace;
};

template <typename S>
std::vector<nn::Tensor<S>> encode_corpus(models::MolecularAutoencoder<S>& model, const Dataset& ds) {
    std::vector<nn::Tensor<S>> out;
    out.reserve(static_cast<size_t>(ds.stats.accepted));
    for (const auto& ids : ds.ids) {
        auto lat = model.encode_tensor(ids);
        out.push_back(lat.reshaped({model.config().seq_len, model.config().dim}));
    }
    return out;
}

template <typename S>
DiffusionTrainLog train_diffusion(models::ConditionalDenoiser<S>& dn, nn::Adam<S>& opt,
                                  const std::vector<nn::Tensor<S>>& x0,  // already in [-1,1]
                                  const Dataset& ds, const diffusion::NoiseSchedule& ns, const RunConfig& cfg,
                                  long start_epoch = 0, long end_epoch = -1) {
    const long N = static_cast<long>(x0.size());
    const long L = dn.config().seq_len, C = dn.config().channels;
    DiffusionTrainLog log;
    std::vector<int> order(static_cast<size_t>(N));
    const long stop = end_epoch < 0 ? cfg.diffusion_epochs : end_epoch;

    for (long epoch = start_epoch; epoch < stop; ++epoch) {
        for (long i = 0; i < N; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
        Rng rng = Rng::derive(cfg.master_seed, "diff-epoch", static_cast<uint64_t>(epoch));
        rng.shuffle(order);
        double sum_simple = 0.0, sum_vlb = 0.0;
        long batches = 0;
        for (long start = 0; start < N; start += cfg.batch_size) {
            const long B = std::min<long>(cfg.batch_size, N - start);
            nn::Tensor<S> z0({B, L, C}), eps({B, L, C}), zt({B, L, C});
            nn::Tensor<S> cond({B, cfg.cond_dim});
            std::vector<int> t(static_cast<size_t>(B));
            std::vector<bool> null_mask(static_cast<size_t>(B), true);
            for (long b = 0; b < B; ++b) {
                const int row = order[static_cast<size_t>(start + b)];
                std::memcpy(z0.data() + b * L * C, x0[static_cast<size_t>(row)].data(),
                            sizeof(S) * static_cast<size_t>(L * C));
                t[static_cast<size_t>(b)] = rng.range_int(1, ns.T);
                for (long i = 0; i < L * C; ++i) eps[b * L * C + i] = static_cast<S>(rng.gaussian());
                if (ds.has_conditioning) {
                    null_mask[static_cast<size_t>(b)] = rng.bernoulli(cfg.null_prob);
                    for (long i = 0; i < cfg.cond_dim; ++i)
                        cond[b * cfg.cond_dim + i] = static_cast<S>(ds.conditioning[row * cfg.cond_dim + i]);
                }
                nn::Tensor<S> zb({L, C}), eb({L, C});
                std::memcpy(zb.data(), z0.data() + b * L * C, sizeof(S) * static_cast<size_t>(L * C));
                std::memcpy(eb.data(), eps.data() + b * L * C, sizeof(S) * static_cast<size_t>(L * C));
                auto r = diffusion::q_sample(ns, zb, t[static_cast<size_t>(b)], eb);
                std::memcpy(zt.data() + b * L * C, r.data(), sizeof(S) * static_cast<size_t>(L * C));
            }
            nn::Tape<S> tape;
            auto bound = dn.bind(tape);
            auto [eps_hat, v] = bound.forward(zt, t, cond, null_mask);
            auto lb = diffusion::hybrid_loss(ns, z0, zt, t, eps, eps_hat, v, cfg.lambda_vlb);
            if (!std::isfinite(lb.simple) || !std::isfinite(lb.vlb))
                fail(Errc::DivergenceDetected, "non-finite diffusion loss");
            tape.backward(lb.total);
            for (size_t i = 0; i < dn.params().size(); ++i) {
                auto* n = bound.leaves[i].node;
                if (n->has_grad)
                    dn.params()[i].grad = n->grad;
                else
                    dn.params()[i].zero_grad();
            }
            opt.step(static_cast<S>(cfg.diffusion_lr));
            sum_simple += lb.simple;
            sum_vlb += lb.vlb;
            ++batches;
        }
        log.simple_trace.push_back(sum_simple / std::max<long>(batches, 1));
        log.vlb_trace.push_back(sum_vlb / std::max<long>(batches, 1));
    }
    return log;
}

// ---- generation ----

struct GeneratedMolecule {
    long id = 0;
    std::string selfies_text;
    std::string smiles_text;
    chem::MolGraph graph;
    double exact_mol_wt = 0.0;
    double balaban_j = 0.0;  // 0 when undefined
};

struct GenerationReport {
    std::vector<GeneratedMolecule> molecules;
    double diversity = 0.0;  // over the batch (0 when < 2 molecules)
    long valid = 0;
};

// Working-range latent -> molecule, through the inverse transform, the
// decoder head, BPE expansion and the SELFIES decoder. Total: every latent
// yields a (possibly empty) valence-valid molecule.
template <typename S>
GeneratedMolecule decode_latent(const nn::Tensor<S>& working_latent, models::MolecularAutoencoder<S>& ae,
                                const bpe::BpeVocab& vocab, const latent::LatentStats& stats,
                                uint64_t smiles_seed) {
    GeneratedMolecule m;
    // sampled latents can leave the working range; clip before inverting
    nn::Tensor<S> clipped(working_latent.shape());
    for (long i = 0; i < working_latent.numel(); ++i)
        clipped[i] = std::min(S(1), std::max(S(-1), working_latent[i]));
    auto raw = latent::inverse(clipped, stats);
    auto ids = ae.decode_tokens(raw);
    auto surfaces = bpe::decode(ids, vocab);
    std::vector<selfies::Token> toks;
    for (const auto& s : surfaces) {
        auto t = selfies::tokenize(s);
        toks.insert(toks.end(), t.begin(), t.end());
    }
    m.graph = selfies::decode(toks);
    m.selfies_text = selfies::detokenize(toks);
    if (!m.graph.empty()) {
        m.smiles_text = chem::write_smiles(m.graph, smiles_seed);
        m.exact_mol_wt = chem::exact_mol_wt(m.graph);
        try {
            m.balaban_j = chem::balaban_j(m.graph);
        } catch (const Error&) {
        }
    }
    return m;
}

// Denoiser wrapper for the sampler: binds a fresh tape per call (inference
// only; gradients never flow).
template <typename S>
diffusion::DenoiseFn<S> make_denoise_fn(models::ConditionalDenoiser<S>& dn, const nn::Tensor<S>& cond_row) {
    return [&dn, cond_row](const nn::Tensor<S>& z, int t, bool use_null) {
        nn::Tape<S> tape;
        auto bound = dn.bind(tape);
        const long B = z.dim(0);
        nn::Tensor<S> cond({B, dn.config().cond_dim});
        std::vector<bool> null_mask(static_cast<size_t>(B), use_null);
        if (!use_null) {
            if (cond_row.numel() != dn.config().cond_dim)
                fail(Errc::ModelNotLoaded, "conditioning row missing for conditional sampling");
            for (long b = 0; b < B; ++b)
                std::memcpy(cond.data() + b * dn.config().cond_dim, cond_row.data(),
                            sizeof(S) * static_cast<size_t>(dn.config().cond_dim));
        }
        auto [eps, v] = bound.forward(z, std::vector<int>(static_cast<size_t>(B), t), cond, null_mask);
        return std::make_pair(eps.val(), v.val());
    };
}

// Samples all `count` chains in one batch (one model evaluation per step)
// while drawing noise from independent per-sample streams, so results are
// bitwise identical to running the chains one at a time.
template <typename S>
GenerationReport generate(models::MolecularAutoencoder<S>& ae, models::ConditionalDenoiser<S>& dn,
                          const bpe::BpeVocab& vocab, const latent::LatentStats& stats,
                          const diffusion::NoiseSchedule& ns, const nn::Tensor<S>& cond_row, double w,
                          long count, uint64_t master_seed) {
    GenerationReport report;
    if (count == 0) return report;
    const bool unconditional = cond_row.numel() == 0;
    const double w_eff = unconditional ? 0.0 : w;
    const long L = dn.config().seq_len, C = dn.config().channels, D = dn.config().cond_dim;

    std::vector<Rng> streams;
    streams.reserve(static_cast<size_t>(count));
    for (long i = 0; i < count; ++i) streams.push_back(Rng::derive(master_seed, "sample", static_cast<uint64_t>(i)));

    nn::Tensor<S> z({count, L, C});
    for (long i = 0; i < count; ++i)
        for (long j = 0; j < L * C; ++j) z[i * L * C + j] = static_cast<S>(streams[static_cast<size_t>(i)].gaussian());

    nn::Tensor<S> cond({count, D});
    if (!unconditional)
        for (long i = 0; i < count; ++i)
            std::memcpy(cond.data() + i * D, cond_row.data(), sizeof(S) * static_cast<size_t>(D));

    std::vector<int> tvec(static_cast<size_t>(count));
    auto eval = [&](int t, bool use_null) {
        nn::Tape<S> tape;
        auto bound = dn.bind(tape);
        std::fill(tvec.begin(), tvec.end(), t);
        std::vector<bool> null_mask(static_cast<size_t>(count), use_null || unconditional);
        auto [eps, v] = bound.forward(z, tvec, cond, null_mask);
        return std::make_pair(eps.val(), v.val());
    };

    const diffusion::SampleOptions opt;  // clipped implied signal, clamped interpolation
    for (int t = ns.T; t >= 1; --t) {
        auto [eps_c, v] = eval(t, false);
        nn::Tensor<S> eps = eps_c;
        if (w_eff != 0.0) eps = diffusion::cfg_epsilon(eps_c, eval(t, true).first, w_eff);
        auto mu = diffusion::mean_from_eps_clipped(ns, z, t, eps, opt);
        if (t == 1) {
            z = mu;
            break;
        }
        const double lb = std::log(ns.beta[static_cast<size_t>(t)]);
        const double lp = ns.post_logvar[static_cast<size_t>(t)];
        for (long i = 0; i < count; ++i)
            for (long j = 0; j < L * C; ++j) {
                const long idx = i * L * C + j;
                const double vi = std::min(1.0, std::max(0.0, static_cast<double>(v[idx])));
                const double logvar = vi * lb + (1.0 - vi) * lp;
                z[idx] = mu[idx] + static_cast<S>(std::exp(0.5 * logvar) * streams[static_cast<size_t>(i)].gaussian());
            }
    }

    for (long i = 0; i < count; ++i) {
        nn::Tensor<S> zi({L, C});
        std::memcpy(zi.data(), z.data() + i * L * C, sizeof(S) * static_cast<size_t>(L * C));
        auto m = decode_latent(zi, ae, vocab, stats,
                               Rng::derive(master_seed, "sample-smiles", static_cast<uint64_t>(i)).next_u64());
        m.id = i;
        report.valid += !m.graph.empty() && m.graph.valence_valid();
        report.molecules.push_back(std::move(m));
    }
    if (report.molecules.size() >= 2) {
        std::vector<metrics::Fingerprint> fps;
        for (const auto& m : report.molecules) fps.push_back(metrics::fingerprint(m.graph));
        report.diversity = metrics::diversity(fps);
    }
    return report;
}

// Versioned report CSV (column order is part of the interface).
inline constexpr const char* kReportHeader = "id,selfies,smiles,exact_mol_wt,balaban_j";

inline std::string report_csv(const GenerationReport& report) {
    std::ostringstream os;
    os << kReportHeader << "\n";
    os.precision(10);
    for (const auto& m : report.molecules)
        os << m.id << "," << m.selfies_text << "," << m.smiles_text << "," << m.exact_mol_wt << ","
           << m.balaban_j << "\n";
    if (report.molecules.size() >= 2) os << "# diversity=" << report.diversity << "\n";
    return os.str();
}

// ---- checkpoints ----

template <typename S>
void save_params(io::Archive& a, const std::string& prefix, const std::vector<nn::Parameter<S>>& params) {
    for (const auto& p : params) {
        if constexpr (std::is_same_v<S, float>)
            a.put_tensor(prefix + p.name, p.value);
        else
            a.put_tensor(prefix + p.name, p.value.template cast<float>());
    }
}

template <typename S>
void load_params(const io::Archive& a, const std::string& prefix, std::vector<nn::Parameter<S>>& params) {
    for (auto& p : params) {
        auto t = a.tensor(prefix + p.name);
        if (t.shape() != p.value.shape()) fail(Errc::CheckpointIncompatible, "shape mismatch: " + p.name);
        if constexpr (std::is_same_v<S, float>)
            p.value = t;
        else
            p.value = t.template cast<S>();
    }
}

template <typename S>
void save_adam(io::Archive& a, const std::string& prefix, nn::Adam<S>& opt) {
    long i = 0;
    for (auto& slot : opt.slots()) {
        if constexpr (std::is_same_v<S, float>) {
            a.put_tensor(prefix + "m" + std::to_string(i), slot.m);
            a.put_tensor(prefix + "v" + std::to_string(i), slot.v);
        } else {
            a.put_tensor(prefix + "m" + std::to_string(i), slot.m.template cast<float>());
            a.put_tensor(prefix + "v" + std::to_string(i), slot.v.template cast<float>());
        }
        ++i;
    }
    a.put_i64(prefix + "t", {opt.step_count()});
}

template <typename S>
void load_adam(const io::Archive& a, const std::string& prefix, nn::Adam<S>& opt) {
    long i = 0;
    for (auto& slot : opt.slots()) {
        if constexpr (std::is_same_v<S, float>) {
            slot.m = a.tensor(prefix + "m" + std::to_string(i));
            slot.v = a.tensor(prefix + "v" + std::to_string(i));
        } else {
            slot.m = a.tensor(prefix + "m" + std::to_string(i)).template cast<S>();
            slot.v = a.tensor(prefix + "v" + std::to_string(i)).template cast<S>();
        }
        ++i;
    }
    opt.set_step_count(a.i64(prefix + "t")[0]);
}

template <typename S>
void save_balancer(io::Archive& a, mtl::DualBalancer<S>& bal) {
    for (auto& [name, vec] : bal.state()) {
        nn::Tensor<float> t({static_cast<long>(vec->size())});
        for (size_t i = 0; i < vec->size(); ++i) t[static_cast<long>(i)] = static_cast<float>((*vec)[i]);
        a.put_tensor(name, t);
    }
    a.put_i64("balancer.t", {bal.step_count()});
}

template <typename S>
void load_balancer(const io::Archive& a, mtl::DualBalancer<S>& bal) {
    for (auto& [name, vec] : bal.state()) {
        auto t = a.tensor(name);
        if (t.numel() != static_cast<long>(vec->size())) fail(Errc::CheckpointIncompatible, name);
        for (size_t i = 0; i < vec->size(); ++i) (*vec)[i] = static_cast<S>(t[static_cast<long>(i)]);
    }
    bal.set_step_count(a.i64("balancer.t")[0]);
}

}  // namespace sold::pipeline
