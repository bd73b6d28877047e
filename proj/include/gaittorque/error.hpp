#pragma once
#include <stdexcept>
#include <string>

namespace gaittorque {

enum class ErrorKind {
    MissingFile,
    SchemaViolation,
    DanglingSubjectRef,
    NonFiniteSample,
    InvalidDataset,
    TooShort,
    CutoffAboveNyquist,
    NonPositiveMass,
    EmptyData,
    NonFiniteInput,
    FeatureCountMismatch,
    UnfittedModel,
    EmptyDataset,
    NoSpeedMatch,
    ConstantTarget,
    LengthMismatch,
    FewerSubjectsThanFolds,
    AllZeroDifferences,
    InvalidArgument,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::DanglingSubjectRef: return "DanglingSubjectRef";
    case ErrorKind::NonFiniteSample: return "NonFiniteSample";
    case ErrorKind::InvalidDataset: return "InvalidDataset";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::CutoffAboveNyquist: return "CutoffAboveNyquist";
    case ErrorKind::NonPositiveMass: return "NonPositiveMass";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::FeatureCountMismatch: return "FeatureCountMismatch";
    case ErrorKind::UnfittedModel: return "UnfittedModel";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NoSpeedMatch: return "NoSpeedMatch";
    case ErrorKind::ConstantTarget: return "ConstantTarget";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::FewerSubjectsThanFolds: return "FewerSubjectsThanFolds";
    case ErrorKind::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// True for failures caused by malformed input data rather than by the computation.
    bool is_data_error() const noexcept {
        switch (kind_) {
        case ErrorKind::MissingFile:
        case ErrorKind::SchemaViolation:
        case ErrorKind::DanglingSubjectRef:
        case ErrorKind::NonFiniteSample:
        case ErrorKind::InvalidDataset:
        case ErrorKind::NonPositiveMass:
        case ErrorKind::NoSpeedMatch:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorKind kind_;
};

} // namespace gaittorque
