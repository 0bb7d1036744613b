#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dbill {

enum class ErrorKind {
    NonDispersing,
    CuspDetected,
    NonSimpleCorner,
    UnboundedHorizon,
    OpenBoundary,
    InvalidSpec,
    OutOfRange,
    EscapedDomain,
    SequenceOverflow,
    SingularInput,
    NotUnstable,
    ResolutionExhausted,
    UnstablePortrait,
    SingularSeed,
    DegenerateComponent,
    ComponentExplosion,
    NoSuchN,
    UnknownKind,
};

inline std::string_view to_string(ErrorKind k);

/// All library failures carry a machine-readable kind next to the message.
class BilliardError : public std::runtime_error {
public:
    BilliardError(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::NonDispersing: return "NonDispersing";
        case ErrorKind::CuspDetected: return "CuspDetected";
        case ErrorKind::NonSimpleCorner: return "NonSimpleCorner";
        case ErrorKind::UnboundedHorizon: return "UnboundedHorizon";
        case ErrorKind::OpenBoundary: return "OpenBoundary";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::OutOfRange: return "OutOfRange";
        case ErrorKind::EscapedDomain: return "EscapedDomain";
        case ErrorKind::SequenceOverflow: return "SequenceOverflow";
        case ErrorKind::SingularInput: return "SingularInput";
        case ErrorKind::NotUnstable: return "NotUnstable";
        case ErrorKind::ResolutionExhausted: return "ResolutionExhausted";
        case ErrorKind::UnstablePortrait: return "UnstablePortrait";
        case ErrorKind::SingularSeed: return "SingularSeed";
        case ErrorKind::DegenerateComponent: return "DegenerateComponent";
        case ErrorKind::ComponentExplosion: return "ComponentExplosion";
        case ErrorKind::NoSuchN: return "NoSuchN";
        case ErrorKind::UnknownKind: return "UnknownKind";
    }
    return "Unknown";
}

}  // namespace dbill
