#include "gramkg/error.hpp"

namespace gramkg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptySurfaceName: return "EmptySurfaceName";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::SplitOverlap: return "SplitOverlap";
    case ErrorKind::DanglingId: return "DanglingId";
    case ErrorKind::InvalidQuery: return "InvalidQuery";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::VocabMismatch: return "VocabMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UnknownEntity: return "UnknownEntity";
    case ErrorKind::UnknownRelation: return "UnknownRelation";
    case ErrorKind::UnknownCandidate: return "UnknownCandidate";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MaskShapeMismatch: return "MaskShapeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::GraphTooLarge: return "GraphTooLarge";
  }
  return "UnknownError";
}

bool is_user_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptySurfaceName:
    case ErrorKind::MissingFile:
    case ErrorKind::MalformedLine:
    case ErrorKind::SplitOverlap:
    case ErrorKind::DanglingId:
    case ErrorKind::InvalidQuery:
    case ErrorKind::InvalidConfig:
    case ErrorKind::VocabMismatch:
    case ErrorKind::IoError:
    case ErrorKind::UnknownEntity:
    case ErrorKind::UnknownRelation:
    case ErrorKind::UnknownCandidate:
      return true;
    default:
      return false;
  }
}

}  // namespace gramkg
