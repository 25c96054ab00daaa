// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: corpus ingestion, BPE training, the two training
// phases, sampling, evolutionary optimization, metrics, SELFIES utilities
// and the grammar fuzz harness. Subcommands exit nonzero with a single
// machine-readable "error: code=... message=..." line on failure.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sold/bpe.hpp"
#include "sold/checkpoint.hpp"
#include "sold/config.hpp"
#include "sold/diffusion.hpp"
#include "sold/evolve.hpp"
#include "sold/latent_transform.hpp"
#include "sold/metrics.hpp"
#include "sold/models.hpp"
#include "sold/multitask.hpp"
#include "sold/pipeline.hpp"
#include "sold/selfies.hpp"
#include "sold/smiles.hpp"

namespace {

using namespace sold;
using json = nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::IoError, "cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(Errc::IoError, "cannot open for write: " + path);
    f << text;
    if (!f) fail(Errc::IoError, "short write: " + path);
}

struct ConfigCli {
    std::string config_path;
    std::vector<std::string> sets;

    pipeline::RunConfig resolve() const {
        pipeline::RunConfig cfg;
        if (!config_path.empty()) cfg = pipeline::parse_config(read_file(config_path));
        apply_sets(cfg);
        return cfg;
    }

    void apply_sets(pipeline::RunConfig& cfg) const {
        for (const auto& kv : sets) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) fail(Errc::ConfigError, "--set expects key=value: " + kv);
            pipeline::set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file");
        cmd->add_option("--set", sets, "override one config key (key=value); repeatable");
    }
};

models::AutoencoderConfig ae_config_for(const pipeline::RunConfig& cfg, long task_heads) {
    models::AutoencoderConfig a;
    a.vocab = cfg.vocab_size;
    a.seq_len = cfg.seq_len;
    a.dim = cfg.model_dim;
    a.heads = cfg.heads;
    a.layers = cfg.layers;
    a.ffn_dim = cfg.ffn_dim;
    a.task_heads = task_heads;
    a.init_seed = Rng::derive(cfg.master_seed, "ae-init").next_u64();
    return a;
}

models::DenoiserConfig dn_config_for(const pipeline::RunConfig& cfg) {
    models::DenoiserConfig d;
    d.seq_len = cfg.seq_len;
    d.channels = cfg.model_dim;
    d.base = cfg.denoiser_base;
    d.mults = cfg.denoiser_mult_list();
    d.cond_dim = cfg.cond_dim;
    d.groups = 8;
    while (d.base % d.groups != 0 && d.groups > 1) d.groups /= 2;
    d.init_seed = Rng::derive(cfg.master_seed, "dn-init").next_u64();
    return d;
}

diffusion::NoiseSchedule schedule_for(const pipeline::RunConfig& cfg) {
    if (cfg.schedule == "cosine") return diffusion::NoiseSchedule::cosine(static_cast<int>(cfg.timesteps));
    if (cfg.schedule == "linear") return diffusion::NoiseSchedule::linear(static_cast<int>(cfg.timesteps));
    fail(Errc::ConfigError, "schedule must be cosine or linear");
}

mtl::DualBalancer<float> balancer_for(models::MolecularAutoencoder<float>& model, const pipeline::RunConfig& cfg) {
    long shared = 0;
    for (int i : model.shared_indices()) shared += model.params()[static_cast<size_t>(i)].value.numel();
    std::vector<long> sizes;
    if (cfg.balance_reconstruction) {
        long rh = 0;
        for (int i : model.recon_head_indices()) rh += model.params()[static_cast<size_t>(i)].value.numel();
        sizes.push_back(rh);
    }
    for (long k = 0; k < model.config().task_heads; ++k) {
        long s = 0;
        for (int i : model.task_head_indices(static_cast<int>(k)))
            s += model.params()[static_cast<size_t>(i)].value.numel();
        sizes.push_back(s);
    }
    mtl::BalancerConfig bc;
    bc.literal_bias_correction = cfg.literal_bias_correction;
    return mtl::DualBalancer<float>(shared, sizes, bc);
}

// Encoder checkpoint: parameters, optimizer + balancer state, config echo,
// embedded BPE vocabulary and its hash, target standardization, epoch.
void save_encoder_ckpt(const std::string& path, models::MolecularAutoencoder<float>& model,
                       nn::Adam<float>& opt, mtl::DualBalancer<float>& bal, const pipeline::RunConfig& cfg,
                       const bpe::BpeVocab& vocab, const pipeline::Dataset& ds, long epoch) {
    io::Archive a;
    pipeline::save_params(a, "ae.", model.params());
    pipeline::save_adam(a, "adam.", opt);
    pipeline::save_balancer(a, bal);
    a.put_string("config", pipeline::serialize_config(cfg));
    a.put_string("bpe_vocab", bpe::serialize(vocab));
    a.put_i64("vocab_hash", {static_cast<int64_t>(fnv1a64(bpe::serialize(vocab)))});
    a.put_i64("task_heads", {model.config().task_heads});
    a.put_i64("epoch", {epoch});
    std::string names;
    for (const auto& n : ds.stats.target_names) names += (names.empty() ? "" : ",") + n;
    a.put_string("target_names", names);
    a.put_doubles("target_mean", ds.stats.target_mean);
    a.put_doubles("target_std", ds.stats.target_std);
    a.save(path);
}

struct LoadedEncoder {
    pipeline::RunConfig cfg;
    bpe::BpeVocab vocab;
    std::unique_ptr<models::MolecularAutoencoder<float>> model;
    io::Archive archive;
};

LoadedEncoder load_encoder_ckpt(const std::string& path) {
    LoadedEncoder out;
    out.archive = io::Archive::load(path);
    out.cfg = pipeline::parse_config(out.archive.str("config"));
    out.vocab = bpe::deserialize(out.archive.str("bpe_vocab"));
    const long task_heads = out.archive.i64("task_heads")[0];
    out.model = std::make_unique<models::MolecularAutoencoder<float>>(ae_config_for(out.cfg, task_heads));
    pipeline::load_params(out.archive, "ae.", out.model->params());
    return out;
}

void save_diffusion_ckpt(const std::string& path, models::ConditionalDenoiser<float>& dn, nn::Adam<float>& opt,
                         const pipeline::RunConfig& cfg, const latent::LatentStats& stats,
                         const diffusion::NoiseSchedule& ns, uint64_t vocab_hash, long epoch) {
    io::Archive a;
    pipeline::save_params(a, "dn.", dn.params());
    pipeline::save_adam(a, "adam.", opt);
    a.put_string("config", pipeline::serialize_config(cfg));
    a.put_doubles("latent_stats", {stats.mean, stats.std});
    a.put_i64("schedule_hash", {static_cast<int64_t>(ns.hash())});
    a.put_i64("vocab_hash", {static_cast<int64_t>(vocab_hash)});
    a.put_i64("epoch", {epoch});
    a.save(path);
}

struct LoadedDiffusion {
    pipeline::RunConfig cfg;
    std::unique_ptr<models::ConditionalDenoiser<float>> model;
    latent::LatentStats stats;
    diffusion::NoiseSchedule schedule;
    io::Archive archive;
};

LoadedDiffusion load_diffusion_ckpt(const std::string& path) {
    LoadedDiffusion out;
    out.archive = io::Archive::load(path);
    out.cfg = pipeline::parse_config(out.archive.str("config"));
    out.model = std::make_unique<models::ConditionalDenoiser<float>>(dn_config_for(out.cfg));
    pipeline::load_params(out.archive, "dn.", out.model->params());
    auto s = out.archive.doubles("latent_stats");
    out.stats = {s[0], s[1]};
    out.schedule = schedule_for(out.cfg);
    if (static_cast<uint64_t>(out.archive.i64("schedule_hash")[0]) != out.schedule.hash())
        fail(Errc::CheckpointIncompatible, "noise schedule drifted since training");
    return out;
}

void check_vocab_compat(const io::Archive& enc, const io::Archive& dif) {
    if (enc.i64("vocab_hash")[0] != dif.i64("vocab_hash")[0])
        fail(Errc::CheckpointIncompatible, "encoder and diffusion checkpoints use different vocabularies");
}

// Light ingestion for commands that only need token sequences.
std::vector<std::vector<std::string>> tokenized_corpus(const std::string& corpus_path, uint64_t master_seed) {
    std::vector<std::vector<std::string>> out;
    Rng seed_stream = Rng::derive(master_seed, "ingest");
    std::ifstream f(corpus_path);
    if (!f) fail(Errc::IoError, "cannot open: " + corpus_path);
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const uint64_t mol_seed = seed_stream.next_u64();
        try {
            auto g = pipeline::detail::parse_any(line);
            if (g.empty()) continue;
            auto randomized = chem::write_smiles(g, mol_seed);
            g = chem::parse_smiles_subset(randomized);
            auto toks = selfies::encode(g, mol_seed ^ 0x517cc1b727220a95ULL);
            std::vector<std::string> surfaces;
            for (const auto& t : toks) surfaces.push_back(selfies::to_surface(t));
            out.push_back(std::move(surfaces));
        } catch (const Error&) {
            continue;  // counted by the full ingest; skipped here
        }
    }
    if (out.empty()) fail(Errc::EmptyCorpus, "no usable molecules in " + corpus_path);
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"protein-conditioned 1D latent diffusion over SELFIES molecular strings"};
    app.require_subcommand(1);

    // ---- selfies utilities ----
    auto* sf = app.add_subcommand("selfies", "tokenizer/codec utilities");
    sf->require_subcommand(1);

    std::string sf_out = "selfies_vocab.txt";
    auto* sf_emit = sf->add_subcommand("emit-vocab", "write the versioned token vocabulary and digit table");
    sf_emit->add_option("-o,--output", sf_out, "output path");
    sf_emit->callback([&] { write_file(sf_out, selfies::vocabulary_text()); });

    std::string sf_text;
    auto* sf_tok = sf->add_subcommand("tokenize", "split a SELFIES string into tokens");
    sf_tok->add_option("text", sf_text, "SELFIES string")->required();
    sf_tok->callback([&] {
        for (const auto& t : selfies::tokenize(sf_text)) std::cout << selfies::to_surface(t) << "\n";
    });

    std::string sf_dec_text;
    uint64_t sf_seed = 0;
    auto* sf_dec = sf->add_subcommand("decode", "SELFIES -> SMILES");
    sf_dec->add_option("text", sf_dec_text, "SELFIES string")->required();
    sf_dec->add_option("--seed", sf_seed, "SMILES writer seed");
    sf_dec->callback([&] {
        auto g = selfies::decode(selfies::tokenize(sf_dec_text));
        std::cout << (g.empty() ? "" : chem::write_smiles(g, sf_seed)) << "\n";
    });

    std::string sf_enc_text;
    uint64_t sf_enc_seed = 0;
    auto* sf_enc = sf->add_subcommand("encode", "SMILES -> SELFIES");
    sf_enc->add_option("text", sf_enc_text, "SMILES string")->required();
    sf_enc->add_option("--seed", sf_enc_seed, "traversal seed");
    sf_enc->callback([&] {
        auto g = chem::parse_smiles_subset(sf_enc_text);
        std::cout << selfies::detokenize(selfies::encode(g, sf_enc_seed)) << "\n";
    });

    // ---- fuzz ----
    auto* fz = app.add_subcommand("fuzz", "decode random token sequences and audit every result");
    long fz_count = 10000, fz_max_len = 128;
    uint64_t fz_seed = 0;
    fz->add_option("--count", fz_count, "number of sequences");
    fz->add_option("--max-len", fz_max_len, "maximum sequence length");
    fz->add_option("--seed", fz_seed, "generator seed");
    fz->callback([&] {
        Rng rng(fz_seed);
        auto vocab = selfies::standard_vocabulary();
        long failures = 0, atoms = 0, nonempty = 0;
        for (long i = 0; i < fz_count; ++i) {
            std::vector<selfies::Token> toks;
            const long len = static_cast<long>(rng.below(static_cast<uint64_t>(fz_max_len) + 1));
            for (long j = 0; j < len; ++j) toks.push_back(vocab[rng.below(vocab.size())]);
            auto g = selfies::decode(toks);
            if (!g.valence_valid()) ++failures;
            atoms += g.atom_count();
            nonempty += !g.empty();
        }
        std::cout << "sequences=" << fz_count << " failures=" << failures << " nonempty=" << nonempty
                  << " mean_atoms=" << static_cast<double>(atoms) / static_cast<double>(fz_count) << "\n";
        if (failures > 0) fail(Errc::ValenceError, std::to_string(failures) + " invalid decodes");
    });

    // ---- train-bpe ----
    auto* tb = app.add_subcommand("train-bpe", "train the byte-pair vocabulary on a corpus");
    std::string tb_corpus, tb_out = "vocab.bpe";
    long tb_target = 256;
    ConfigCli tb_cfg;
    tb->add_option("--corpus", tb_corpus, "molecule corpus, one SMILES/SELFIES per line")->required();
    tb->add_option("--target-size", tb_target, "total vocabulary budget (reserved + base + merges)");
    tb->add_option("-o,--output", tb_out, "vocabulary file");
    tb_cfg.attach(tb);
    tb->callback([&] {
        auto cfg = tb_cfg.resolve();
        auto corpus = tokenized_corpus(tb_corpus, cfg.master_seed);
        auto vocab = bpe::train(corpus, static_cast<int>(tb_target));
        write_file(tb_out, bpe::serialize(vocab));
        std::cout << "vocab_size=" << vocab.size() << " merges=" << vocab.merges.size() << "\n";
    });

    // ---- ingest ----
    auto* ig = app.add_subcommand("ingest", "parse, randomize, tokenize and pad a corpus; write the manifest");
    std::string ig_corpus, ig_bpe, ig_desc, ig_emb, ig_out = "manifest.txt";
    ConfigCli ig_cfg;
    ig->add_option("--corpus", ig_corpus)->required();
    ig->add_option("--bpe", ig_bpe, "trained vocabulary file")->required();
    ig->add_option("--descriptors", ig_desc, "optional descriptor CSV (id,<name>,...)");
    ig->add_option("--embeddings", ig_emb, "optional protein embedding file");
    ig->add_option("-o,--output", ig_out, "manifest path");
    ig_cfg.attach(ig);
    ig->callback([&] {
        auto cfg = ig_cfg.resolve();
        auto vocab = bpe::deserialize(read_file(ig_bpe));
        auto ds = pipeline::ingest(ig_corpus, vocab, cfg, ig_desc, ig_emb);
        write_file(ig_out, pipeline::manifest_text(ds, cfg));
        std::cout << "accepted=" << ds.stats.accepted << " parse_failed=" << ds.stats.parse_failed
                  << " dropped_overlength=" << ds.stats.dropped_overlength << "\n";
    });

    // ---- train-encoder ----
    auto* te = app.add_subcommand("train-encoder", "two-phase autoencoder training");
    std::string te_corpus, te_bpe, te_desc, te_out = "encoder.ckpt", te_resume;
    ConfigCli te_cfg;
    te->add_option("--corpus", te_corpus)->required();
    te->add_option("--bpe", te_bpe)->required();
    te->add_option("--descriptors", te_desc);
    te->add_option("-o,--output", te_out);
    te->add_option("--resume", te_resume, "checkpoint to continue from");
    te_cfg.attach(te);
    te->callback([&] {
        auto cfg = te_cfg.resolve();
        auto vocab = bpe::deserialize(read_file(te_bpe));
        auto ds = pipeline::ingest(te_corpus, vocab, cfg, te_desc);
        const long K = static_cast<long>(ds.stats.target_names.size());
        models::MolecularAutoencoder<float> model(ae_config_for(cfg, K));
        std::vector<nn::Parameter<float>*> pp;
        for (auto& p : model.params()) pp.push_back(&p);
        nn::Adam<float> opt(pp);
        auto bal = balancer_for(model, cfg);
        long start_epoch = 0;
        if (!te_resume.empty()) {
            auto a = io::Archive::load(te_resume);
            if (static_cast<uint64_t>(a.i64("vocab_hash")[0]) != fnv1a64(bpe::serialize(vocab)))
                fail(Errc::CheckpointIncompatible, "resume checkpoint was trained with a different vocabulary");
            pipeline::load_params(a, "ae.", model.params());
            pipeline::load_adam(a, "adam.", opt);
            pipeline::load_balancer(a, bal);
            start_epoch = a.i64("epoch")[0];
        }
        auto log = pipeline::train_encoder(model, bal, opt, ds, cfg, start_epoch);
        save_encoder_ckpt(te_out, model, opt, bal, cfg, vocab, ds, cfg.encoder_epochs);
        for (size_t e = 0; e < log.task_losses.size(); ++e) {
            std::cout << "epoch=" << (start_epoch + static_cast<long>(e)) << " lr=" << log.lr_trace[e];
            for (size_t k = 0; k < log.task_losses[e].size(); ++k)
                std::cout << " loss" << k << "=" << log.task_losses[e][k];
            std::cout << "\n";
        }
        std::cout << "epochs=" << cfg.encoder_epochs << " token_accuracy=" << log.final_token_accuracy << "\n";
    });

    // ---- train-diffusion ----
    auto* td = app.add_subcommand("train-diffusion", "train the latent denoiser");
    std::string td_corpus, td_bpe, td_desc, td_enc, td_emb, td_out = "diffusion.ckpt", td_resume;
    ConfigCli td_cfg;
    td->add_option("--corpus", td_corpus)->required();
    td->add_option("--bpe", td_bpe)->required();
    td->add_option("--descriptors", td_desc);
    td->add_option("--encoder", td_enc, "trained encoder checkpoint")->required();
    td->add_option("--embeddings", td_emb, "protein embeddings (omit to train unconditionally)");
    td->add_option("-o,--output", td_out);
    td->add_option("--resume", td_resume);
    td_cfg.attach(td);
    td->callback([&] {
        auto cfg = td_cfg.resolve();
        auto vocab = bpe::deserialize(read_file(td_bpe));
        auto enc = load_encoder_ckpt(td_enc);
        if (static_cast<uint64_t>(enc.archive.i64("vocab_hash")[0]) != fnv1a64(bpe::serialize(vocab)))
            fail(Errc::CheckpointIncompatible, "encoder checkpoint was trained with a different vocabulary");
        // structural fields are pinned by the encoder checkpoint
        cfg.vocab_size = enc.cfg.vocab_size;
        cfg.seq_len = enc.cfg.seq_len;
        cfg.model_dim = enc.cfg.model_dim;
        cfg.heads = enc.cfg.heads;
        cfg.layers = enc.cfg.layers;
        cfg.ffn_dim = enc.cfg.ffn_dim;
        auto ds = pipeline::ingest(td_corpus, vocab, cfg, td_desc, td_emb);
        auto latents = pipeline::encode_corpus(*enc.model, ds);
        auto stats = latent::fit(latents);
        std::vector<nn::Tensor<float>> x0;
        for (const auto& z : latents) x0.push_back(latent::forward(z, stats));
        models::ConditionalDenoiser<float> dn(dn_config_for(cfg));
        std::vector<nn::Parameter<float>*> dp;
        for (auto& p : dn.params()) dp.push_back(&p);
        nn::Adam<float> opt(dp);
        auto ns = schedule_for(cfg);
        long start_epoch = 0;
        if (!td_resume.empty()) {
            auto a = io::Archive::load(td_resume);
            if (static_cast<uint64_t>(a.i64("schedule_hash")[0]) != ns.hash())
                fail(Errc::CheckpointIncompatible, "resume checkpoint uses a different schedule");
            pipeline::load_params(a, "dn.", dn.params());
            pipeline::load_adam(a, "adam.", opt);
            auto s = a.doubles("latent_stats");
            stats = {s[0], s[1]};
            start_epoch = a.i64("epoch")[0];
        }
        auto log = pipeline::train_diffusion(dn, opt, x0, ds, ns, cfg, start_epoch);
        save_diffusion_ckpt(td_out, dn, opt, cfg, stats, ns, fnv1a64(bpe::serialize(vocab)), cfg.diffusion_epochs);
        for (size_t e = 0; e < log.simple_trace.size(); ++e)
            std::cout << "epoch=" << (start_epoch + static_cast<long>(e)) << " L_simple=" << log.simple_trace[e]
                      << " L_vlb=" << log.vlb_trace[e] << "\n";
        std::cout << "epochs=" << cfg.diffusion_epochs << " latent_mean=" << stats.mean
                  << " latent_std=" << stats.std << "\n";
    });

    // ---- sample ----
    auto* sm = app.add_subcommand("sample", "generate molecules from the trained pipeline");
    std::string sm_enc, sm_dif, sm_emb, sm_out = "report.csv", sm_manifest;
    long sm_count = -1, sm_protein = 0;
    double sm_w = -1.0;
    uint64_t sm_seed = 0;
    bool sm_seed_set = false;
    ConfigCli sm_cfg;
    sm->add_option("--encoder", sm_enc)->required();
    sm->add_option("--diffusion", sm_dif)->required();
    sm->add_option("--embeddings", sm_emb, "protein embedding file (omit for unconditional sampling)");
    sm->add_option("--protein-index", sm_protein, "row of the embedding file to condition on");
    sm->add_option("--w", sm_w, "guidance weight (default from config)");
    sm->add_option("--count", sm_count, "number of molecules (default from config)");
    sm->add_option("--seed", sm_seed, "master seed override")->trigger_on_parse()->each([&](const std::string&) {
        sm_seed_set = true;
    });
    sm->add_option("-o,--output", sm_out, "molecules CSV");
    sm->add_option("--manifest", sm_manifest, "run manifest JSON (includes wall-clock time)");
    sm_cfg.attach(sm);
    sm->callback([&] {
        auto enc = load_encoder_ckpt(sm_enc);
        auto dif = load_diffusion_ckpt(sm_dif);
        check_vocab_compat(enc.archive, dif.archive);
        auto cfg = dif.cfg;
        sm_cfg.apply_sets(cfg);
        const double w = sm_w >= 0 ? sm_w : cfg.guidance_w;
        const long count = sm_count >= 0 ? sm_count : cfg.sample_count;
        const uint64_t seed = sm_seed_set ? sm_seed : cfg.master_seed;
        nn::Tensor<float> cond_row({0});
        if (!sm_emb.empty()) {
            auto rows = io::read_embeddings(sm_emb);
            if (sm_protein < 0 || sm_protein >= rows.dim(0)) fail(Errc::OutOfRange, "--protein-index out of range");
            cond_row = nn::Tensor<float>({rows.dim(1)});
            std::memcpy(cond_row.data(), rows.data() + sm_protein * rows.dim(1),
                        sizeof(float) * static_cast<size_t>(rows.dim(1)));
        }
        const auto t0 = std::chrono::steady_clock::now();
        auto report = pipeline::generate(*enc.model, *dif.model, enc.vocab, dif.stats, dif.schedule, cond_row,
                                         w, count, seed);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_file(sm_out, pipeline::report_csv(report));
        if (!sm_manifest.empty()) {
            json m;
            m["count"] = count;
            m["valid"] = report.valid;
            m["diversity"] = report.diversity;
            m["guidance_w"] = w;
            m["master_seed"] = seed;
            m["schedule_hash"] = dif.schedule.hash();
            m["latent_mean"] = dif.stats.mean;
            m["latent_std"] = dif.stats.std;
            m["wall_clock_seconds"] = wall;
            write_file(sm_manifest, m.dump(2) + "\n");
        }
        std::cout << "count=" << count << " valid=" << report.valid << " diversity=" << report.diversity
                  << " wall_clock_s=" << wall << "\n";
    });

    // ---- evolve ----
    auto* ev = app.add_subcommand("evolve", "noise/denoise property optimization over a seed population");
    std::string ev_enc, ev_dif, ev_seeds, ev_out = "lineage.csv";
    std::string ev_objective;
    ConfigCli ev_cfg;
    ev->add_option("--encoder", ev_enc)->required();
    ev->add_option("--diffusion", ev_dif)->required();
    ev->add_option("--seeds", ev_seeds, "seed molecules, one SMILES/SELFIES per line")->required();
    ev->add_option("--objective", ev_objective, "exact_mol_wt | neg_exact_mol_wt | balaban_j | atom_count");
    ev->add_option("-o,--output", ev_out, "lineage CSV");
    ev_cfg.attach(ev);
    ev->callback([&] {
        auto enc = load_encoder_ckpt(ev_enc);
        auto dif = load_diffusion_ckpt(ev_dif);
        check_vocab_compat(enc.archive, dif.archive);
        auto cfg = dif.cfg;
        ev_cfg.apply_sets(cfg);
        evolve::EvolutionConfig ec;
        ec.noise_steps = cfg.evolve_noise_steps;
        ec.w = cfg.evolve_w;
        ec.population = cfg.population;
        ec.offspring = cfg.offspring;
        ec.generations = cfg.generations;
        if (!ev_objective.empty()) ec.objective = ev_objective;

        // seed population: encode molecules into working-range latents
        std::vector<nn::Tensor<float>> seeds;
        Rng seed_stream = Rng::derive(cfg.master_seed, "evolve-seeds");
        for (const auto& line : pipeline::detail::read_lines(ev_seeds)) {
            if (line.empty() || line[0] == '#') continue;
            try {
                auto g = pipeline::detail::parse_any(line);
                if (g.empty()) continue;
                auto toks = selfies::encode(g, seed_stream.next_u64());
                std::vector<std::string> surfaces;
                for (const auto& t : toks) surfaces.push_back(selfies::to_surface(t));
                auto padded = bpe::pad_or_drop(bpe::encode(surfaces, enc.vocab), static_cast<int>(cfg.seq_len));
                if (!padded) continue;
                auto lat = enc.model->encode_tensor(*padded);
                seeds.push_back(
                    latent::forward(lat.reshaped({1, cfg.seq_len, cfg.model_dim}), dif.stats));
            } catch (const Error&) {
                continue;
            }
        }
        if (seeds.empty()) fail(Errc::EmptyPopulation, "no seed molecule survived encoding");

        auto objective = evolve::make_objective(ec.objective);
        nn::Tensor<float> no_cond({0});
        auto base_fn = pipeline::make_denoise_fn(*dif.model, no_cond);
        diffusion::DenoiseFn<float> fn = [&base_fn](const nn::Tensor<float>& z, int t, bool) {
            return base_fn(z, t, true);  // unconditional mutation pathway
        };
        evolve::LatentScorer<float> scorer = [&](const nn::Tensor<float>& z) {
            auto m = pipeline::decode_latent(z.reshaped({cfg.seq_len, cfg.model_dim}), *enc.model, enc.vocab,
                                             dif.stats, 0);
            return std::make_pair(objective(m.graph), m.selfies_text);
        };
        auto result = evolve::run_evolution(dif.schedule, fn, scorer, std::move(seeds), ec, cfg.master_seed);
        write_file(ev_out, evolve::lineage_csv(result.lineage));
        for (size_t g = 0; g < result.best_per_generation.size(); ++g)
            std::cout << "generation=" << g << " best=" << result.best_per_generation[g] << "\n";
    });

    // ---- metrics ----
    auto* mt = app.add_subcommand("metrics", "validity/uniqueness/novelty/diversity and score conversion");
    std::string mt_molecules, mt_scores, mt_train, mt_out = "metrics.json";
    double mt_vina_offset = 0.0, mt_temperature = 310.0;
    mt->add_option("--molecules", mt_molecules, "molecules CSV from the sample command")->required();
    mt->add_option("--scores", mt_scores, "external scores CSV: id,smiles,vina,qed,sas");
    mt->add_option("--train-corpus", mt_train, "reference corpus for novelty");
    mt->add_option("--vina-offset", mt_vina_offset, "constant subtracted from ingested docking scores");
    mt->add_option("--temperature", mt_temperature, "temperature in kelvin for the IC50 conversion");
    mt->add_option("-o,--output", mt_out);
    mt->callback([&] {
        auto lines = pipeline::detail::read_lines(mt_molecules);
        if (lines.empty() || lines[0].rfind("id,selfies,smiles", 0) != 0)
            fail(Errc::IoError, "unrecognized molecules CSV header");
        std::vector<chem::MolGraph> mols;
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty() || lines[i][0] == '#') continue;
            std::istringstream ls(lines[i]);
            std::string id_s, selfies_s;
            std::getline(ls, id_s, ',');
            std::getline(ls, selfies_s, ',');
            chem::MolGraph g;
            if (!selfies_s.empty()) g = selfies::decode(selfies::tokenize(selfies_s));
            mols.push_back(std::move(g));
        }
        std::vector<chem::MolGraph> reference;
        if (!mt_train.empty())
            for (const auto& line : pipeline::detail::read_lines(mt_train)) {
                if (line.empty() || line[0] == '#') continue;
                try {
                    reference.push_back(pipeline::detail::parse_any(line));
                } catch (const Error&) {
                }
            }
        auto counters = metrics::count_set(mols, reference);
        json out;
        out["total"] = counters.total;
        out["valid"] = counters.valid;
        out["unique"] = counters.unique_count;
        out["novel"] = counters.novel;
        if (mols.size() >= 2) out["diversity"] = metrics::diversity_of(mols);
        if (!mt_scores.empty()) {
            auto slines = pipeline::detail::read_lines(mt_scores);
            if (slines.empty() || slines[0].rfind("id,smiles,vina", 0) != 0)
                fail(Errc::IoError, "scores CSV must start with id,smiles,vina");
            json rows = json::array();
            for (size_t i = 1; i < slines.size(); ++i) {
                if (slines[i].empty()) continue;
                std::istringstream ls(slines[i]);
                std::string id_s, smiles_s, vina_s, qed_s, sas_s;
                std::getline(ls, id_s, ',');
                std::getline(ls, smiles_s, ',');
                std::getline(ls, vina_s, ',');
                std::getline(ls, qed_s, ',');
                std::getline(ls, sas_s, ',');
                json row;
                row["id"] = std::stol(id_s);
                const double dg = std::stod(vina_s) - mt_vina_offset;
                row["delta_g"] = dg;
                row["ic50_molar"] = metrics::delta_g_to_ic50(dg, mt_temperature);
                if (!qed_s.empty()) row["qed"] = std::stod(qed_s);
                if (!sas_s.empty()) row["sas"] = std::stod(sas_s);
                rows.push_back(row);
            }
            out["scored"] = rows;
        }
        write_file(mt_out, out.dump(2) + "\n");
        std::cout << "total=" << counters.total << " valid=" << counters.valid
                  << " unique=" << counters.unique_count << " novel=" << counters.novel << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: code=" << errc_name(e.code()) << " message=\"" << e.what() << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: code=Internal message=\"" << e.what() << "\"\n";
        return 1;
    }
}
