#pragma once

#include <stdexcept>
#include <string>

namespace conva {

/// Broad failure classes. The CLI maps these onto its exit-code taxonomy and
/// the service onto HTTP status codes.
enum class ErrorKind {
  kIo,
  kFormat,
  kInvariant,
  kDimension,
  kNumeric,
  kPrecondition,
  kDegenerateProbe,
  kTraining,
  kGateUnavailable,
  kPlan,
  kNotFound,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace conva
