#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drig {

enum class ErrorKind {
    InvalidInput,
    NotPsd,
    SingularModel,
    EmptyEnvironment,
    NonPdSystem,
    InconsistentInvariance,
    SingularDifference,
    NoConvergence,
    NoDominatingEnvironment,
    SingularHeterogeneity,
    TestBelowReference,
    DegenerateDirection,
    SingularTestGram,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "InvalidInput";
        case ErrorKind::NotPsd: return "NotPsd";
        case ErrorKind::SingularModel: return "SingularModel";
        case ErrorKind::EmptyEnvironment: return "EmptyEnvironment";
        case ErrorKind::NonPdSystem: return "NonPdSystem";
        case ErrorKind::InconsistentInvariance: return "InconsistentInvariance";
        case ErrorKind::SingularDifference: return "SingularDifference";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::NoDominatingEnvironment: return "NoDominatingEnvironment";
        case ErrorKind::SingularHeterogeneity: return "SingularHeterogeneity";
        case ErrorKind::TestBelowReference: return "TestBelowReference";
        case ErrorKind::DegenerateDirection: return "DegenerateDirection";
        case ErrorKind::SingularTestGram: return "SingularTestGram";
    }
    return "Unknown";
}

/// Every failure raised by the library. The kind is stable and is what the CLI
/// reports; the message carries the numeric detail.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Input errors map to CLI exit code 2, everything else is numerical (3).
    bool is_input_error() const noexcept {
        return kind_ == ErrorKind::InvalidInput || kind_ == ErrorKind::NotPsd ||
               kind_ == ErrorKind::EmptyEnvironment;
    }

private:
    ErrorKind kind_;
};

}  // namespace drig
