#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexbeam {

enum class ErrorCode {
    // fsm
    EmptyGroup,
    EmptyAlternative,
    UnknownToken,
    TooManyGroups,
    InvalidQuota,
    OutOfRange,
    // vocabulary
    DuplicateToken,
    // decoder
    VocabMismatch,
    NoHypothesis,
    InvalidConfig,
    // scorers
    EmptyCorpus,
    NonPositiveAlpha,
    BadDistribution,
    // filter
    DegenerateBox,
    InvalidDetection,
    UnknownClass,
    CyclicHierarchy,
    MissingWordForms,
    // sampler
    TargetTooSmall,
    EmptyPools,
    InvalidCandidates,
    AllClassesIgnored,
    OverlappingDomains,
    // io
    IoFailure,
    ParseError,
    // internal
    InvariantViolation,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EmptyAlternative: return "EmptyAlternative";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::TooManyGroups: return "TooManyGroups";
    case ErrorCode::InvalidQuota: return "InvalidQuota";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::DuplicateToken: return "DuplicateToken";
    case ErrorCode::VocabMismatch: return "VocabMismatch";
    case ErrorCode::NoHypothesis: return "NoHypothesis";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NonPositiveAlpha: return "NonPositiveAlpha";
    case ErrorCode::BadDistribution: return "BadDistribution";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::InvalidDetection: return "InvalidDetection";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::CyclicHierarchy: return "CyclicHierarchy";
    case ErrorCode::MissingWordForms: return "MissingWordForms";
    case ErrorCode::TargetTooSmall: return "TargetTooSmall";
    case ErrorCode::EmptyPools: return "EmptyPools";
    case ErrorCode::InvalidCandidates: return "InvalidCandidates";
    case ErrorCode::AllClassesIgnored: return "AllClassesIgnored";
    case ErrorCode::OverlappingDomains: return "OverlappingDomains";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

    /// Input errors are the caller's fault; the rest indicate a bug.
    bool is_input_error() const noexcept { return code_ != ErrorCode::InvariantViolation; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace lexbeam
