// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// The two networks: a bidirectional transformer autoencoder over token
// sequences with per-position decoding head and K scalar task heads, and a
// conditional 1D U-Net denoiser over (seq_len x channels) latents with a
// sinusoidal timestep embedding, a learned projection of the protein
// embedding added to it, a learned null-conditioning vector, and two output
// heads (noise prediction and variance-interpolation coefficient).

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sold/autodiff.hpp"
#include "sold/optim.hpp"

namespace sold::models {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

// ---- autoencoder ----

struct AutoencoderConfig {
    long vocab = 256;
    long seq_len = 128;
    long dim = 256;
    long heads = 4;
    long layers = 2;
    long ffn_dim = 512;
    long task_heads = 2;
    uint64_t init_seed = 1;

    long expected_param_count() const {
        long per_layer = 2 * dim                      // ln1
                         + 4 * (dim * dim + dim)      // q k v o
                         + 2 * dim                    // ln2
                         + dim * ffn_dim + ffn_dim    // ffn in
                         + ffn_dim * dim + dim;       // ffn out
        return vocab * dim + seq_len * dim + layers * per_layer + 2 * dim  // final ln
               + dim * vocab + vocab                                       // decoder head
               + task_heads * (dim + 1);
    }

    uint64_t hash() const {
        long v[] = {vocab, seq_len, dim, heads, layers, ffn_dim, task_heads};
        return fnv1a64(v, sizeof(v));
    }
};

// Graph handle for one forward build; leaves are index-aligned with the
// model's parameter list so per-task gradients can be harvested.
template <typename S>
struct BoundAutoencoder;

template <typename S>
class MolecularAutoencoder {
public:
    explicit MolecularAutoencoder(AutoencoderConfig cfg) : cfg_(cfg) {
        Rng rng(cfg.init_seed);
        auto add = [&](const std::string& name, Tensor<S> t) {
            params_.push_back(Parameter<S>(name, std::move(t)));
            return static_cast<int>(params_.size()) - 1;
        };
        shared_.push_back(add("embed", nn::init_embedding<S>(cfg.vocab, cfg.dim, rng)));
        shared_.push_back(add("pos", nn::init_embedding<S>(cfg.seq_len, cfg.dim, rng)));
        for (long l = 0; l < cfg.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            auto ones = Tensor<S>({cfg.dim});
            ones.fill(S(1));
            shared_.push_back(add(p + "ln1.g", ones));
            shared_.push_back(add(p + "ln1.b", Tensor<S>({cfg.dim})));
            for (const char* w : {"wq", "wk", "wv", "wo"}) {
                shared_.push_back(add(p + w, nn::init_linear_weight<S>(cfg.dim, cfg.dim, rng)));
                shared_.push_back(add(p + w + std::string(".b"), Tensor<S>({cfg.dim})));
            }
            shared_.push_back(add(p + "ln2.g", ones));
            shared_.push_back(add(p + "ln2.b", Tensor<S>({cfg.dim})));
            shared_.push_back(add(p + "ffn.w1", nn::init_linear_weight<S>(cfg.dim, cfg.ffn_dim, rng)));
            shared_.push_back(add(p + "ffn.b1", Tensor<S>({cfg.ffn_dim})));
            shared_.push_back(add(p + "ffn.w2", nn::init_linear_weight<S>(cfg.ffn_dim, cfg.dim, rng)));
            shared_.push_back(add(p + "ffn.b2", Tensor<S>({cfg.dim})));
        }
        auto ones = Tensor<S>({cfg.dim});
        ones.fill(S(1));
        shared_.push_back(add("lnf.g", ones));
        shared_.push_back(add("lnf.b", Tensor<S>({cfg.dim})));
        recon_head_.push_back(add("decoder.w", nn::init_linear_weight<S>(cfg.dim, cfg.vocab, rng)));
        recon_head_.push_back(add("decoder.b", Tensor<S>({cfg.vocab})));
        task_heads_.resize(static_cast<size_t>(cfg.task_heads));
        for (long k = 0; k < cfg.task_heads; ++k) {
            const std::string p = "task" + std::to_string(k) + ".";
            task_heads_[static_cast<size_t>(k)].push_back(add(p + "w", nn::init_linear_weight<S>(cfg.dim, 1, rng)));
            task_heads_[static_cast<size_t>(k)].push_back(add(p + "b", Tensor<S>({1})));
        }
    }

    const AutoencoderConfig& config() const { return cfg_; }
    std::vector<Parameter<S>>& params() { return params_; }
    const std::vector<Parameter<S>>& params() const { return params_; }

    long param_count() const {
        long n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    const std::vector<int>& shared_indices() const { return shared_; }
    const std::vector<int>& recon_head_indices() const { return recon_head_; }
    const std::vector<int>& task_head_indices(int k) const { return task_heads_[static_cast<size_t>(k)]; }

    BoundAutoencoder<S> bind(Tape<S>& tape);

    // Convenience inference paths (fresh tape per call).
    Tensor<S> encode_tensor(const std::vector<int>& ids) const;
    std::vector<int> decode_tokens(const Tensor<S>& latent) const;
    std::vector<S> task_values(const Tensor<S>& latent) const;

private:
    AutoencoderConfig cfg_;
    std::vector<Parameter<S>> params_;
    std::vector<int> shared_;
    std::vector<int> recon_head_;
    std::vector<std::vector<int>> task_heads_;
};

template <typename S>
struct BoundAutoencoder {
    MolecularAutoencoder<S>* model = nullptr;
    Tape<S>* tape = nullptr;
    std::vector<Var<S>> leaves;

    Var<S> leaf_of(const std::string& name) const {
        const auto& ps = model->params();
        for (size_t i = 0; i < ps.size(); ++i)
            if (ps[i].name == name) return leaves[i];
        fail(Errc::ShapeMismatch, "unknown parameter " + name);
    }

    // ids length must be B * seq_len; returns the (B, seq_len, dim) latent.
    Var<S> encode(const std::vector<int>& ids, long batch) {
        const auto& cfg = model->config();
        if (static_cast<long>(ids.size()) != batch * cfg.seq_len)
            fail(Errc::BadLength, "encode expects batch * seq_len ids");
        for (int id : ids)
            if (id < 0 || id >= cfg.vocab) fail(Errc::BadLength, "token id outside vocabulary");
        using namespace nn::ops;
        auto x = embedding_lookup(leaf_of("embed"), ids, batch, cfg.seq_len);
        // learned positions, shared across the batch
        auto pos = leaf_of("pos");
        {
            Tensor<S> pb({batch, cfg.seq_len, cfg.dim});
            for (long b = 0; b < batch; ++b)
                std::memcpy(pb.data() + b * cfg.seq_len * cfg.dim, pos.val().data(),
                            sizeof(S) * static_cast<size_t>(cfg.seq_len * cfg.dim));
            auto pos_b = tape->make(std::move(pb), {pos.node}, [p = pos.node, batch](nn::Node<S>& self) {
                auto& gp = Tape<S>::grad_buf(p);
                const long n = gp.numel();
                for (long b = 0; b < batch; ++b)
                    for (long i = 0; i < n; ++i) gp[i] += self.grad[b * n + i];
            });
            x = add(x, pos_b);
        }
        for (long l = 0; l < cfg.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            auto h = layer_norm(x, leaf_of(p + "ln1.g"), leaf_of(p + "ln1.b"));
            auto att = multi_head_attention(h, leaf_of(p + "wq"), leaf_of(p + "wq.b"), leaf_of(p + "wk"),
                                            leaf_of(p + "wk.b"), leaf_of(p + "wv"), leaf_of(p + "wv.b"),
                                            leaf_of(p + "wo"), leaf_of(p + "wo.b"), cfg.heads);
            x = add(x, att);
            auto h2 = layer_norm(x, leaf_of(p + "ln2.g"), leaf_of(p + "ln2.b"));
            auto ff = linear(gelu(linear(h2, leaf_of(p + "ffn.w1"), leaf_of(p + "ffn.b1"))),
                             leaf_of(p + "ffn.w2"), leaf_of(p + "ffn.b2"));
            x = add(x, ff);
        }
        return layer_norm(x, leaf_of("lnf.g"), leaf_of("lnf.b"));
    }

    Var<S> decoder_logits(Var<S> latent) {
        return nn::ops::linear(latent, leaf_of("decoder.w"), leaf_of("decoder.b"));
    }

    // K scalar predictions from the mean-pooled latent: [B, K].
    Var<S> task_predictions(Var<S> latent) {
        using namespace nn::ops;
        auto pooled = mean_pool_dim1(latent);
        Var<S> out;
        for (long k = 0; k < model->config().task_heads; ++k) {
            const std::string p = "task" + std::to_string(k) + ".";
            auto yk = linear(pooled, leaf_of(p + "w"), leaf_of(p + "b"));
            out = k == 0 ? yk : concat_cols(out, yk);
        }
        return out;
    }

    Var<S> task_prediction(Var<S> latent, int k) {
        const std::string p = "task" + std::to_string(k) + ".";
        return nn::ops::linear(nn::ops::mean_pool_dim1(latent), leaf_of(p + "w"), leaf_of(p + "b"));
    }

    std::vector<nn::Node<S>*> nodes_for(const std::vector<int>& idx) const {
        std::vector<nn::Node<S>*> out;
        out.reserve(idx.size());
        for (int i : idx) out.push_back(leaves[static_cast<size_t>(i)].node);
        return out;
    }

    // Copies a leaf gradient (zeros when untouched) into `dst`.
    void read_grad(int param_index, Tensor<S>& dst) const {
        auto* n = leaves[static_cast<size_t>(param_index)].node;
        if (n->has_grad)
            dst = n->grad;
        else {
            dst = Tensor<S>(n->value.shape());
        }
    }

private:
    static Var<S> concat_cols(Var<S> a, Var<S> b) {
        // [B, K1] ++ [B, K2] -> [B, K1+K2]
        using namespace nn::ops;
        auto a3 = reshape(a, {a.val().dim(0), 1, a.val().dim(1)});
        auto b3 = reshape(b, {b.val().dim(0), 1, b.val().dim(1)});
        auto cat = concat_lastdim(a3, b3);
        return reshape(cat, {a.val().dim(0), a.val().dim(1) + b.val().dim(1)});
    }
};

template <typename S>
BoundAutoencoder<S> MolecularAutoencoder<S>::bind(Tape<S>& tape) {
    BoundAutoencoder<S> b;
    b.model = this;
    b.tape = &tape;
    b.leaves.reserve(params_.size());
    for (auto& p : params_) b.leaves.push_back(tape.leaf(p.value));
    return b;
}

template <typename S>
Tensor<S> MolecularAutoencoder<S>::encode_tensor(const std::vector<int>& ids) const {
    Tape<S> tape;
    auto bound = const_cast<MolecularAutoencoder<S>*>(this)->bind(tape);
    return bound.encode(ids, static_cast<long>(ids.size()) / cfg_.seq_len).val();
}

// Greedy per-position argmax over the decoder head.
template <typename S>
std::vector<int> MolecularAutoencoder<S>::decode_tokens(const Tensor<S>& latent) const {
    if (latent.rank() != 2 || latent.dim(0) != cfg_.seq_len || latent.dim(1) != cfg_.dim)
        fail(Errc::ShapeMismatch, "latent must be (seq_len, dim)");
    const Parameter<S>* w = nullptr;
    const Parameter<S>* b = nullptr;
    for (const auto& p : params_) {
        if (p.name == "decoder.w") w = &p;
        if (p.name == "decoder.b") b = &p;
    }
    Tensor<S> logits({cfg_.seq_len, cfg_.vocab});
    nn::gemm_nn(latent.data(), w->value.data(), logits.data(), cfg_.seq_len, cfg_.dim, cfg_.vocab, false);
    std::vector<int> ids(static_cast<size_t>(cfg_.seq_len));
    for (long i = 0; i < cfg_.seq_len; ++i) {
        long best = 0;
        S best_v = logits[i * cfg_.vocab] + b->value[0];
        for (long v = 1; v < cfg_.vocab; ++v) {
            const S x = logits[i * cfg_.vocab + v] + b->value[v];
            if (x > best_v) {
                best_v = x;
                best = v;
            }
        }
        ids[static_cast<size_t>(i)] = static_cast<int>(best);
    }
    return ids;
}

template <typename S>
std::vector<S> MolecularAutoencoder<S>::task_values(const Tensor<S>& latent) const {
    Tape<S> tape;
    auto bound = const_cast<MolecularAutoencoder<S>*>(this)->bind(tape);
    auto lat = tape.leaf(latent.rank() == 2 ? latent.reshaped({1, cfg_.seq_len, cfg_.dim}) : latent);
    auto pred = bound.task_predictions(lat);
    std::vector<S> out;
    for (long i = 0; i < pred.val().numel(); ++i) out.push_back(pred.val()[i]);
    return out;
}

// ---- conditional denoiser ----

struct DenoiserConfig {
    long seq_len = 128;
    long channels = 256;
    long base = 64;
    std::vector<long> mults = {1, 2, 4};
    long cond_dim = 1280;
    long groups = 8;
    uint64_t init_seed = 2;

    long temb_dim() const { return base * 4; }

    long expected_param_count() const {
        long n = 0;
        auto conv = [](long k, long ci, long co) { return k * ci * co + co; };
        // temb MLP
        n += base * temb_dim() + temb_dim() + temb_dim() * temb_dim() + temb_dim();
        // conditioning projection + null vector
        n += cond_dim * temb_dim() + temb_dim() + cond_dim;
        // input conv
        n += conv(3, channels, base * mults[0]);
        auto resblock = [&](long ci, long co) {
            return 2 * ci + conv(3, ci, co)              // gn1, conv1
                   + temb_dim() * co + co                // temb inject
                   + 2 * co + conv(3, co, co)            // gn2, conv2
                   + (ci == co ? 0 : conv(1, ci, co));   // skip
        };
        const long L = static_cast<long>(mults.size());
        for (long i = 0; i < L; ++i) {
            const long ci = base * (i == 0 ? mults[0] : mults[static_cast<size_t>(i - 1)]);
            const long co = base * mults[static_cast<size_t>(i)];
            n += resblock(ci, co);
            if (i + 1 < L) n += conv(3, co, co);  // downsample
        }
        const long wlast = base * mults.back();
        n += resblock(wlast, wlast);  // middle
        for (long i = L - 1; i >= 0; --i) {
            const long wi = base * mults[static_cast<size_t>(i)];
            n += resblock(2 * wi, wi);
            if (i > 0) {
                const long wprev = base * mults[static_cast<size_t>(i - 1)];
                n += conv(3, wi, wprev);  // post-upsample conv
            }
        }
        // out: gn + conv to 2*channels
        n += 2 * base * mults[0] + conv(3, base * mults[0], 2 * channels);
        return n;
    }

    uint64_t hash() const {
        long v[] = {seq_len, channels, base, cond_dim, groups, static_cast<long>(mults.size())};
        uint64_t h = fnv1a64(v, sizeof(v));
        h = fnv1a64(mults.data(), mults.size() * sizeof(long), h);
        return h;
    }
};

template <typename S>
struct BoundDenoiser;

template <typename S>
class ConditionalDenoiser {
public:
    explicit ConditionalDenoiser(DenoiserConfig cfg) : cfg_(std::move(cfg)) {
        Rng rng(cfg_.init_seed);
        const long td = cfg_.temb_dim();
        auto add = [&](const std::string& name, Tensor<S> t) {
            params_.push_back(Parameter<S>(name, std::move(t)));
        };
        auto add_conv = [&](const std::string& name, long k, long ci, long co, bool zero = false) {
            add(name + ".w", zero ? Tensor<S>({k, ci, co}) : nn::init_conv_weight<S>(k, ci, co, rng));
            add(name + ".b", Tensor<S>({co}));
        };
        auto add_gn = [&](const std::string& name, long c) {
            auto ones = Tensor<S>({c});
            ones.fill(S(1));
            add(name + ".g", ones);
            add(name + ".b", Tensor<S>({c}));
        };
        auto add_res = [&](const std::string& p, long ci, long co) {
            add_gn(p + ".gn1", ci);
            add_conv(p + ".conv1", 3, ci, co);
            add(p + ".temb.w", nn::init_linear_weight<S>(td, co, rng));
            add(p + ".temb.b", Tensor<S>({co}));
            add_gn(p + ".gn2", co);
            add_conv(p + ".conv2", 3, co, co);
            if (ci != co) add_conv(p + ".skip", 1, ci, co);
        };

        add("temb.w1", nn::init_linear_weight<S>(cfg_.base, td, rng));
        add("temb.b1", Tensor<S>({td}));
        add("temb.w2", nn::init_linear_weight<S>(td, td, rng));
        add("temb.b2", Tensor<S>({td}));
        add("cond.w", nn::init_linear_weight<S>(cfg_.cond_dim, td, rng));
        add("cond.b", Tensor<S>({td}));
        add("null_cond", nn::random_normal<S>({cfg_.cond_dim}, S(0), S(0.02), rng));

        const long n = static_cast<long>(cfg_.mults.size());
        add_conv("in", 3, cfg_.channels, width(0));
        for (long i = 0; i < n; ++i) {
            add_res("down" + std::to_string(i), i == 0 ? width(0) : width(i - 1), width(i));
            if (i + 1 < n) add_conv("downsample" + std::to_string(i), 3, width(i), width(i));
        }
        add_res("mid", width(n - 1), width(n - 1));
        for (long i = n - 1; i >= 0; --i) {
            add_res("up" + std::to_string(i), 2 * width(i), width(i));
            if (i > 0) add_conv("upconv" + std::to_string(i), 3, width(i), width(i - 1));
        }
        add_gn("out.gn", width(0));
        add_conv("out", 3, width(0), 2 * cfg_.channels, /*zero=*/true);
    }

    long width(long level) const { return cfg_.base * cfg_.mults[static_cast<size_t>(level)]; }
    const DenoiserConfig& config() const { return cfg_; }
    std::vector<Parameter<S>>& params() { return params_; }
    const std::vector<Parameter<S>>& params() const { return params_; }
    long param_count() const {
        long n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    BoundDenoiser<S> bind(Tape<S>& tape);

private:
    DenoiserConfig cfg_;
    std::vector<Parameter<S>> params_;
};

template <typename S>
struct BoundDenoiser {
    ConditionalDenoiser<S>* model = nullptr;
    Tape<S>* tape = nullptr;
    std::vector<Var<S>> leaves;

    Var<S> leaf_of(const std::string& name) const {
        const auto& ps = model->params();
        for (size_t i = 0; i < ps.size(); ++i)
            if (ps[i].name == name) return leaves[i];
        fail(Errc::ShapeMismatch, "unknown parameter " + name);
    }

    std::vector<nn::Node<S>*> all_nodes() const {
        std::vector<nn::Node<S>*> out;
        for (const auto& l : leaves) out.push_back(l.node);
        return out;
    }

    // z: [B, seq_len, channels]; t: per-item timestep; cond: [B, cond_dim]
    // rows (ignored where null_mask is set — those rows use the learned
    // vector). Returns (eps_hat, v), both [B, seq_len, channels].
    std::pair<Var<S>, Var<S>> forward(const Tensor<S>& z, const std::vector<int>& t,
                                      const Tensor<S>& cond, const std::vector<bool>& null_mask) {
        using namespace nn::ops;
        const auto& cfg = model->config();
        const long B = z.dim(0);
        if (z.rank() != 3 || z.dim(1) != cfg.seq_len || z.dim(2) != cfg.channels)
            fail(Errc::ShapeMismatch, "denoiser input must be (B, seq_len, channels)");
        if (static_cast<long>(t.size()) != B || static_cast<long>(null_mask.size()) != B)
            fail(Errc::ShapeMismatch, "per-item metadata size");

        // timestep + conditioning embedding
        auto temb_sin = tape->leaf(nn::sinusoidal_embedding<S>(t, cfg.base));
        auto temb = linear(silu(linear(temb_sin, leaf_of("temb.w1"), leaf_of("temb.b1"))), leaf_of("temb.w2"),
                           leaf_of("temb.b2"));
        Tensor<S> cond_rows({B, cfg.cond_dim});
        std::vector<S> null_w(static_cast<size_t>(B), S(0));
        for (long b = 0; b < B; ++b) {
            if (null_mask[static_cast<size_t>(b)]) {
                null_w[static_cast<size_t>(b)] = S(1);
            } else {
                if (cond.numel() < (b + 1) * cfg.cond_dim) fail(Errc::ShapeMismatch, "conditioning rows");
                std::memcpy(cond_rows.data() + b * cfg.cond_dim, cond.data() + b * cfg.cond_dim,
                            sizeof(S) * static_cast<size_t>(cfg.cond_dim));
            }
        }
        auto cond_full = add(tape->leaf(cond_rows), scaled_row_broadcast(leaf_of("null_cond"), null_w));
        temb = add(temb, linear(cond_full, leaf_of("cond.w"), leaf_of("cond.b")));
        temb = silu(temb);

        auto resblock = [&](const std::string& p, Var<S> x, long ci, long co) {
            auto h = conv1d(silu(group_norm(x, cfg.groups, leaf_of(p + ".gn1.g"), leaf_of(p + ".gn1.b"))),
                            leaf_of(p + ".conv1.w"), leaf_of(p + ".conv1.b"));
            h = add_row_broadcast(h, linear(temb, leaf_of(p + ".temb.w"), leaf_of(p + ".temb.b")));
            h = conv1d(silu(group_norm(h, cfg.groups, leaf_of(p + ".gn2.g"), leaf_of(p + ".gn2.b"))),
                       leaf_of(p + ".conv2.w"), leaf_of(p + ".conv2.b"));
            auto skip = ci == co ? x : conv1d(x, leaf_of(p + ".skip.w"), leaf_of(p + ".skip.b"));
            return add(h, skip);
        };

        const long n = static_cast<long>(cfg.mults.size());
        auto h = conv1d(tape->leaf(z), leaf_of("in.w"), leaf_of("in.b"));
        std::vector<Var<S>> skips;
        for (long i = 0; i < n; ++i) {
            h = resblock("down" + std::to_string(i), h, i == 0 ? model->width(0) : model->width(i - 1),
                         model->width(i));
            skips.push_back(h);
            if (i + 1 < n)
                h = conv1d(h, leaf_of("downsample" + std::to_string(i) + ".w"),
                           leaf_of("downsample" + std::to_string(i) + ".b"), 2);
        }
        h = resblock("mid", h, model->width(n - 1), model->width(n - 1));
        for (long i = n - 1; i >= 0; --i) {
            h = resblock("up" + std::to_string(i), concat_lastdim(h, skips[static_cast<size_t>(i)]),
                         2 * model->width(i), model->width(i));
            if (i > 0)
                h = conv1d(upsample_nearest2(h), leaf_of("upconv" + std::to_string(i) + ".w"),
                           leaf_of("upconv" + std::to_string(i) + ".b"));
        }
        h = conv1d(silu(group_norm(h, cfg.groups, leaf_of("out.gn.g"), leaf_of("out.gn.b"))), leaf_of("out.w"),
                   leaf_of("out.b"));
        auto eps = slice_lastdim(h, 0, cfg.channels);
        auto v = slice_lastdim(h, cfg.channels, 2 * cfg.channels);
        return {eps, v};
    }
};

template <typename S>
BoundDenoiser<S> ConditionalDenoiser<S>::bind(Tape<S>& tape) {
    BoundDenoiser<S> b;
    b.model = this;
    b.tape = &tape;
    b.leaves.reserve(params_.size());
    for (auto& p : params_) b.leaves.push_back(tape.leaf(p.value));
    return b;
}

}  // namespace sold::models
