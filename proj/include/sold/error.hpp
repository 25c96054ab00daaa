// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sold {

// Every failure mode the library can report. CLI maps these to a
// machine-readable "error: code=<name> ..." line and a nonzero exit.
enum class Errc {
    // molgraph / smiles
    UnsupportedFeature,
    SyntaxError,
    ValenceError,
    DisconnectedGraph,
    TooSmall,
    // selfies
    MalformedBracket,
    UnknownSymbol,
    UnsupportedElement,
    EncodeOverflow,
    // bpe
    EmptyCorpus,
    TargetTooSmall,
    // neural core / models
    ShapeMismatch,
    NonFiniteValue,
    BadLength,
    TimestepOutOfRange,
    // multitask
    NonPositiveShiftedLoss,
    // latent transform
    DegenerateCorpus,
    OutOfRange,
    // diffusion / evolve
    ModelNotLoaded,
    EmptyPopulation,
    UndecodableLatent,
    // metrics
    WidthMismatch,
    TooFew,
    // pipeline
    DivergenceDetected,
    CheckpointIncompatible,
    ConfigError,
    IoError,
};

inline std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::UnsupportedFeature: return "UnsupportedFeature";
        case Errc::SyntaxError: return "SyntaxError";
        case Errc::ValenceError: return "ValenceError";
        case Errc::DisconnectedGraph: return "DisconnectedGraph";
        case Errc::TooSmall: return "TooSmall";
        case Errc::MalformedBracket: return "MalformedBracket";
        case Errc::UnknownSymbol: return "UnknownSymbol";
        case Errc::UnsupportedElement: return "UnsupportedElement";
        case Errc::EncodeOverflow: return "EncodeOverflow";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::TargetTooSmall: return "TargetTooSmall";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::NonFiniteValue: return "NonFiniteValue";
        case Errc::BadLength: return "BadLength";
        case Errc::TimestepOutOfRange: return "TimestepOutOfRange";
        case Errc::NonPositiveShiftedLoss: return "NonPositiveShiftedLoss";
        case Errc::DegenerateCorpus: return "DegenerateCorpus";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::ModelNotLoaded: return "ModelNotLoaded";
        case Errc::EmptyPopulation: return "EmptyPopulation";
        case Errc::UndecodableLatent: return "UndecodableLatent";
        case Errc::WidthMismatch: return "WidthMismatch";
        case Errc::TooFew: return "TooFew";
        case Errc::DivergenceDetected: return "DivergenceDetected";
        case Errc::CheckpointIncompatible: return "CheckpointIncompatible";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace sold
