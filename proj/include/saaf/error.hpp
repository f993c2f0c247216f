#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saaf {

enum class ErrorKind {
    // tensor engine
    ShapeMismatch,
    NumericOverflow,
    NotScalar,
    GraphConsumed,
    MissingGradient,
    NonFiniteLoss,
    // text model
    UnsupportedCharacter,
    IdOutOfRange,
    SequenceTooLong,
    MissingImgPlaceholder,
    MultipleImgPlaceholders,
    TargetNotFound,
    // vision / seg head
    NonDivisibleDims,
    NoSegToken,
    BadThreshold,
    // objective
    NoSupervisedPositions,
    NonFinite,
    // data
    SpecInfeasible,
    UnknownClass,
    EmptyDescription,
    TooFewSamples,
    MalformedRecord,
    MissingFile,
    BadMagic,
    NonBinaryMaskValue,
    DuplicateAcrossSplits,
    // pipeline
    EmptySplit,
    VersionMismatch,
    TruncatedFile,
    BadConfig,
    DimsMismatch,
};

std::string_view to_string(ErrorKind kind);

/// Data-side failures (dataset files, formats, manifests) vs model-side failures.
bool is_data_error(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

} // namespace saaf
