#pragma once

#include <stdexcept>
#include <string>

namespace retino {

/// Error kinds raised by the toolkit. Each maps to one failure mode of a
/// specific operation; analysis-level code catches by kind and records the
/// event instead of aborting where a per-frame failure is recoverable.
enum class Err {
    ZeroPower,
    Singularity,
    ZeroRatio,
    BadKernel,
    Degenerate,
    DegenerateConfig,
    SingularHomography,
    FrameNotFound,
    PatternNotFound,
    PupilNotFound,
    PupilTooSmall,
    ReflexNotFound,
    NoPasses,
    InsufficientTrack,
    ZeroBeamDisplacement,
    TooFewValidPasses,
    ParseError,
    EmptyInput,
    DegenerateVariance,
    ClassAbsent,
    ConfigInvalid,
    Io,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& msg)
        : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}

    Err code() const noexcept { return code_; }

private:
    Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& msg) { throw Error(code, msg); }

}  // namespace retino
