#include "zebrod/error.hpp"

namespace zebrod {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::NonPositiveImageSize: return "NonPositiveImageSize";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyCrop: return "EmptyCrop";
    case ErrorCode::MissingAnnotation: return "MissingAnnotation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::InvalidPayload: return "InvalidPayload";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::DuplicateSku: return "DuplicateSku";
    case ErrorCode::EmptyReferences: return "EmptyReferences";
    case ErrorCode::UnknownSku: return "UnknownSku";
    case ErrorCode::UnknownFlagId: return "UnknownFlagId";
    case ErrorCode::FlagNotOpen: return "FlagNotOpen";
    case ErrorCode::DetectorFailure: return "DetectorFailure";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NoClasses: return "NoClasses";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace zebrod
