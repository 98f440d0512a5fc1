#include "retino/error.hpp"

namespace retino {

const char* err_name(Err e) {
    switch (e) {
        case Err::ZeroPower: return "ZeroPower";
        case Err::Singularity: return "Singularity";
        case Err::ZeroRatio: return "ZeroRatio";
        case Err::BadKernel: return "BadKernel";
        case Err::Degenerate: return "Degenerate";
        case Err::DegenerateConfig: return "DegenerateConfig";
        case Err::SingularHomography: return "SingularHomography";
        case Err::FrameNotFound: return "FrameNotFound";
        case Err::PatternNotFound: return "PatternNotFound";
        case Err::PupilNotFound: return "PupilNotFound";
        case Err::PupilTooSmall: return "PupilTooSmall";
        case Err::ReflexNotFound: return "ReflexNotFound";
        case Err::NoPasses: return "NoPasses";
        case Err::InsufficientTrack: return "InsufficientTrack";
        case Err::ZeroBeamDisplacement: return "ZeroBeamDisplacement";
        case Err::TooFewValidPasses: return "TooFewValidPasses";
        case Err::ParseError: return "ParseError";
        case Err::EmptyInput: return "EmptyInput";
        case Err::DegenerateVariance: return "DegenerateVariance";
        case Err::ClassAbsent: return "ClassAbsent";
        case Err::ConfigInvalid: return "ConfigInvalid";
        case Err::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace retino
