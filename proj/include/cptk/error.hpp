// Copyright 2026 The cptk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cptk {

/// Broad failure classes. The CLI maps each one to a process exit code.
enum class ErrorKind {
  kUsage,       // bad flags or arguments
  kValidation,  // malformed values (probabilities, alpha, labels, ...)
  kShape,       // dimension mismatches
  kIntegrity,   // on-disk corruption: magic, version, checksum, truncation
  kIo,          // filesystem failures
  kNumerical,   // non-finite loss, failed optimisation
};

/// Finer-grained codes for the data layer, so callers can tell apart the
/// ways a dataset directory can be rejected.
enum class DataErrorCode {
  kNone,
  kBadMagic,
  kBadVersion,
  kBadDimensions,
  kChecksumMismatch,
  kTruncated,
  kBadManifest,
  kLabelOutOfRange,
  kLocked,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        DataErrorCode code = DataErrorCode::kNone)
      : std::runtime_error(what), kind_(kind), code_(code) {}

  ErrorKind kind() const noexcept { return kind_; }
  DataErrorCode code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  DataErrorCode code_;
};

inline Error ValidationError(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}
inline Error ShapeError(const std::string& what) {
  return Error(ErrorKind::kShape, what);
}
inline Error NumericalError(const std::string& what) {
  return Error(ErrorKind::kNumerical, what);
}
inline Error UsageError(const std::string& what) {
  return Error(ErrorKind::kUsage, what);
}
inline Error IoError(const std::string& what) {
  return Error(ErrorKind::kIo, what);
}
inline Error DataError(DataErrorCode code, const std::string& what) {
  return Error(ErrorKind::kIntegrity, what, code);
}

/// Exit codes: 0 success, 2 usage, 3 data/validation, 4 numerical failure.
inline int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return 2;
    case ErrorKind::kNumerical:
      return 4;
    default:
      return 3;
  }
}

}  // namespace cptk
