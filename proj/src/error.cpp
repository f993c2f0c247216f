#include "saaf/error.hpp"

namespace saaf {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NumericOverflow: return "NumericOverflow";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::GraphConsumed: return "GraphConsumed";
    case ErrorKind::MissingGradient: return "MissingGradient";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::UnsupportedCharacter: return "UnsupportedCharacter";
    case ErrorKind::IdOutOfRange: return "IdOutOfRange";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::MissingImgPlaceholder: return "MissingImgPlaceholder";
    case ErrorKind::MultipleImgPlaceholders: return "MultipleImgPlaceholders";
    case ErrorKind::TargetNotFound: return "TargetNotFound";
    case ErrorKind::NonDivisibleDims: return "NonDivisibleDims";
    case ErrorKind::NoSegToken: return "NoSegToken";
    case ErrorKind::BadThreshold: return "BadThreshold";
    case ErrorKind::NoSupervisedPositions: return "NoSupervisedPositions";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::SpecInfeasible: return "SpecInfeasible";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::EmptyDescription: return "EmptyDescription";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::NonBinaryMaskValue: return "NonBinaryMaskValue";
    case ErrorKind::DuplicateAcrossSplits: return "DuplicateAcrossSplits";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::DimsMismatch: return "DimsMismatch";
    }
    return "Unknown";
}

bool is_data_error(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::SpecInfeasible:
    case ErrorKind::UnknownClass:
    case ErrorKind::EmptyDescription:
    case ErrorKind::TooFewSamples:
    case ErrorKind::MalformedRecord:
    case ErrorKind::MissingFile:
    case ErrorKind::BadMagic:
    case ErrorKind::TruncatedFile:
    case ErrorKind::NonDivisibleDims:
    case ErrorKind::NonBinaryMaskValue:
    case ErrorKind::DuplicateAcrossSplits:
    case ErrorKind::EmptySplit:
    case ErrorKind::DimsMismatch:
    case ErrorKind::UnsupportedCharacter:
        return true;
    default:
        return false;
    }
}

} // namespace saaf
