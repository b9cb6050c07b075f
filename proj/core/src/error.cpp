#include "conva/error.hpp"

namespace conva {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kInvariant: return "invariant";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kDegenerateProbe: return "degenerate_probe";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kGateUnavailable: return "gate_unavailable";
    case ErrorKind::kPlan: return "plan";
    case ErrorKind::kNotFound: return "not_found";
  }
  return "unknown";
}

}  // namespace conva
