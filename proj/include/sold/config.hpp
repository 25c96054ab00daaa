// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: plain-text key=value file, every key overridable from
// the command line. Unknown keys are rejected; serialization round-trips.
// Defaults marked "reference" mirror the published training recipe; the
// toy-scale values used by the test suites override them explicitly.

#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sold/error.hpp"
#include "sold/rng.hpp"

namespace sold::pipeline {

struct RunConfig {
    // encoder training
    long encoder_epochs = 200;        // reference: 200 total
    long pretrain_epochs = 20;        // reference: 20 reconstruction-only
    double encoder_lr = 1e-4;         // reference start value, cosine annealed
    long batch_size = 32;
    bool balance_reconstruction = true;   // reconstruction joins the balancer as a task
    bool literal_bias_correction = false;

    // autoencoder architecture
    long vocab_size = 256;
    long seq_len = 128;
    long model_dim = 256;
    long heads = 4;
    long layers = 2;
    long ffn_dim = 512;

    // diffusion
    long diffusion_epochs = 50;       // reference: 1000
    double diffusion_lr = 1e-4;
    long timesteps = 1000;
    std::string schedule = "cosine";  // or "linear"
    double lambda_vlb = 1e-4;
    double null_prob = 0.2;
    long denoiser_base = 64;
    std::string denoiser_mults = "1,2,4";
    long cond_dim = 1280;

    // sampling
    double guidance_w = 5.0;
    long sample_count = 100;

    // evolution
    long evolve_noise_steps = 75;
    double evolve_w = 0.0;
    long population = 16;
    long offspring = 4;
    long generations = 5;

    // reproducibility
    uint64_t master_seed = 0;

    std::vector<long> denoiser_mult_list() const {
        std::vector<long> out;
        std::istringstream ss(denoiser_mults);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(std::stol(cell));
        if (out.empty()) fail(Errc::ConfigError, "denoiser_mults is empty");
        return out;
    }
};

namespace detail {

struct Field {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<Field>& fields() {
    static const std::vector<Field> f = [] {
        std::vector<Field> v;
        auto num = [&v](const char* name, auto member) {
            using T = std::decay_t<decltype(RunConfig{}.*member)>;
            v.push_back({name,
                         [member](const RunConfig& c) {
                             std::ostringstream os;
                             os << c.*member;
                             return os.str();
                         },
                         [member, name](RunConfig& c, const std::string& s) {
                             std::istringstream is(s);
                             T x{};
                             if (!(is >> x) || !is.eof())
                                 fail(Errc::ConfigError, std::string("bad value for ") + name + ": " + s);
                             c.*member = x;
                         }});
        };
        auto boolean = [&v](const char* name, bool RunConfig::*member) {
            v.push_back({name,
                         [member](const RunConfig& c) { return c.*member ? std::string("true") : std::string("false"); },
                         [member, name](RunConfig& c, const std::string& s) {
                             if (s == "true" || s == "1")
                                 c.*member = true;
                             else if (s == "false" || s == "0")
                                 c.*member = false;
                             else
                                 fail(Errc::ConfigError, std::string("bad boolean for ") + name + ": " + s);
                         }});
        };
        auto text = [&v](const char* name, std::string RunConfig::*member) {
            v.push_back({name, [member](const RunConfig& c) { return c.*member; },
                         [member](RunConfig& c, const std::string& s) { c.*member = s; }});
        };
        num("encoder_epochs", &RunConfig::encoder_epochs);
        num("pretrain_epochs", &RunConfig::pretrain_epochs);
        num("encoder_lr", &RunConfig::encoder_lr);
        num("batch_size", &RunConfig::batch_size);
        boolean("balance_reconstruction", &RunConfig::balance_reconstruction);
        boolean("literal_bias_correction", &RunConfig::literal_bias_correction);
        num("vocab_size", &RunConfig::vocab_size);
        num("seq_len", &RunConfig::seq_len);
        num("model_dim", &RunConfig::model_dim);
        num("heads", &RunConfig::heads);
        num("layers", &RunConfig::layers);
        num("ffn_dim", &RunConfig::ffn_dim);
        num("diffusion_epochs", &RunConfig::diffusion_epochs);
        num("diffusion_lr", &RunConfig::diffusion_lr);
        num("timesteps", &RunConfig::timesteps);
        text("schedule", &RunConfig::schedule);
        num("lambda_vlb", &RunConfig::lambda_vlb);
        num("null_prob", &RunConfig::null_prob);
        num("denoiser_base", &RunConfig::denoiser_base);
        text("denoiser_mults", &RunConfig::denoiser_mults);
        num("cond_dim", &RunConfig::cond_dim);
        num("guidance_w", &RunConfig::guidance_w);
        num("sample_count", &RunConfig::sample_count);
        num("evolve_noise_steps", &RunConfig::evolve_noise_steps);
        num("evolve_w", &RunConfig::evolve_w);
        num("population", &RunConfig::population);
        num("offspring", &RunConfig::offspring);
        num("generations", &RunConfig::generations);
        num("master_seed", &RunConfig::master_seed);
        return v;
    }();
    return f;
}

}  // namespace detail

inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : detail::fields())
        if (f.name == key) {
            f.set(cfg, value);
            return;
        }
    fail(Errc::ConfigError, "unknown config key: " + key);
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& f : detail::fields()) os << f.name << " = " << f.get(cfg) << "\n";
    return os.str();
}

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
            if (!blank) fail(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const char* ws = " \t\r";
            s.erase(0, s.find_first_not_of(ws));
            auto last = s.find_last_not_of(ws);
            s.erase(last + 1);
            return s;
        };
        set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(serialize_config(cfg)); }

}  // namespace sold::pipeline
