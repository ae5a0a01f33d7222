#pragma once

#include <stdexcept>
#include <string>

namespace conscal {

enum class ErrorKind {
    MalformedFile,
    LabelOutOfRange,
    NonFiniteLogit,
    IoFailure,
    DegenerateSplit,
    InvalidRange,
    TooManyBins,
    IndexOutOfRange,
    NotPositiveDefinite,
    EmptyNeighborhood,
    KOutOfRange,
    MissingValidation,
    InvalidArgument,
};

inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::MalformedFile: return "MalformedFile";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::NonFiniteLogit: return "NonFiniteLogit";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::DegenerateSplit: return "DegenerateSplit";
        case ErrorKind::InvalidRange: return "InvalidRange";
        case ErrorKind::TooManyBins: return "TooManyBins";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::EmptyNeighborhood: return "EmptyNeighborhood";
        case ErrorKind::KOutOfRange: return "KOutOfRange";
        case ErrorKind::MissingValidation: return "MissingValidation";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library. `kind()` identifies the failure class.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

}  // namespace conscal
