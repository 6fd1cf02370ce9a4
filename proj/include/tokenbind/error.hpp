#pragma once

#include <stdexcept>
#include <string>

namespace tokenbind {

// Every failure mode in the library has a named code. The CLI maps codes to
// exit codes: numerical failures -> 2, input/validation failures -> 1.
enum class Errc {
    NotSymmetric,
    NoConvergence,
    NearSingular,
    DimensionMismatch,
    ZeroVector,
    NonPositiveScale,
    IndexOutOfRange,
    DegenerateColumn,
    AbsoluteContinuityViolation,
    NotDistribution,
    ZeroReference,
    SizeMismatch,
    EmptyObjectSet,
    NonFiniteLoss,
    NotFinite,
    ParseError,
    SchemaError,
    OverlapError,
    IndexError,
    BadMagic,
    BadVersion,
    TruncatedPayload,
    BadDtype,
    ShapeMismatch,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::NotSymmetric: return "NotSymmetric";
        case Errc::NoConvergence: return "NoConvergence";
        case Errc::NearSingular: return "NearSingular";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::NonPositiveScale: return "NonPositiveScale";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::DegenerateColumn: return "DegenerateColumn";
        case Errc::AbsoluteContinuityViolation: return "AbsoluteContinuityViolation";
        case Errc::NotDistribution: return "NotDistribution";
        case Errc::ZeroReference: return "ZeroReference";
        case Errc::SizeMismatch: return "SizeMismatch";
        case Errc::EmptyObjectSet: return "EmptyObjectSet";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::NotFinite: return "NotFinite";
        case Errc::ParseError: return "ParseError";
        case Errc::SchemaError: return "SchemaError";
        case Errc::OverlapError: return "OverlapError";
        case Errc::IndexError: return "IndexError";
        case Errc::BadMagic: return "BadMagic";
        case Errc::BadVersion: return "BadVersion";
        case Errc::TruncatedPayload: return "TruncatedPayload";
        case Errc::BadDtype: return "BadDtype";
        case Errc::ShapeMismatch: return "ShapeMismatch";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

    // Failures of the computation itself, as opposed to bad inputs.
    bool numerical() const noexcept {
        return code_ == Errc::NearSingular || code_ == Errc::NoConvergence ||
               code_ == Errc::NonFiniteLoss;
    }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace tokenbind
