#pragma once

#include <stdexcept>
#include <string>

namespace lampo {

// Coarse failure classes. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  kConfig,
  kValidation,
  kTransport,
  kCalibration,
  kContextOverflow,
  kUnsupported,
  kUnparseable,
  kInfeasible,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kCalibration: return "calibration";
    case ErrorKind::kContextOverflow: return "context-overflow";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kUnparseable: return "unparseable";
    case ErrorKind::kInfeasible: return "infeasible";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what)
      : Error(ErrorKind::kCalibration, what) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what)
      : Error(ErrorKind::kTransport, what) {}
};

// A debiased comparison could not be completed. Carries the digests of both
// swapped prompts so a resumed run can identify what is missing.
class ComparisonUnavailable : public Error {
 public:
  ComparisonUnavailable(std::string forward_digest, std::string swapped_digest,
                        const std::string& cause)
      : Error(ErrorKind::kTransport,
              "comparison unavailable (prompts " + forward_digest + ", " +
                  swapped_digest + "): " + cause),
        forward_digest_(std::move(forward_digest)),
        swapped_digest_(std::move(swapped_digest)) {}

  const std::string& forward_digest() const noexcept { return forward_digest_; }
  const std::string& swapped_digest() const noexcept { return swapped_digest_; }

 private:
  std::string forward_digest_;
  std::string swapped_digest_;
};

}  // namespace lampo
