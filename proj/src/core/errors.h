#pragma once

#include <stdexcept>
#include <string>

namespace adatta {

// Error taxonomy shared by the whole library. The C API and the CLI map
// these onto process exit codes: validation -> 2, divergence -> 3, io -> 4.
enum class ErrorKind {
  kInvalidInput,
  kAlignmentMismatch,
  kManifestError,
  kDurationMismatch,
  kDiverged,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& msg)
      : Error(ErrorKind::kInvalidInput, msg) {}
};

class AlignmentMismatch : public Error {
 public:
  explicit AlignmentMismatch(const std::string& msg)
      : Error(ErrorKind::kAlignmentMismatch, msg) {}
};

class ManifestError : public Error {
 public:
  explicit ManifestError(const std::string& msg)
      : Error(ErrorKind::kManifestError, msg) {}
};

class DurationMismatch : public Error {
 public:
  explicit DurationMismatch(const std::string& msg)
      : Error(ErrorKind::kDurationMismatch, msg) {}
};

class DivergedError : public Error {
 public:
  explicit DivergedError(const std::string& msg)
      : Error(ErrorKind::kDiverged, msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(ErrorKind::kIo, msg) {}
};

}  // namespace adatta
