#pragma once

#include <stdexcept>
#include <string>

namespace gramkg {

enum class ErrorKind {
  // input-side failures (CLI exit code 2)
  EmptySurfaceName,
  MissingFile,
  MalformedLine,
  SplitOverlap,
  DanglingId,
  InvalidQuery,
  InvalidConfig,
  VocabMismatch,
  IoError,
  UnknownEntity,
  UnknownRelation,
  UnknownCandidate,
  // internal contract violations (CLI exit code 1)
  ShapeMismatch,
  MaskShapeMismatch,
  DimensionMismatch,
  InvalidRate,
  IndexOutOfRange,
  EmptyInput,
  GraphTooLarge,
};

const char* to_string(ErrorKind kind);

/// True for errors caused by user input (bad paths, malformed files, ...).
bool is_user_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace gramkg
