#include "nncert/error.hpp"

namespace nncert {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::InvalidArg: return "InvalidArg";
    case ErrorKind::Index: return "IndexError";
    case ErrorKind::UnsoundBounds: return "UnsoundBounds";
    case ErrorKind::SolverFailure: return "SolverFailure";
    case ErrorKind::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::TooManyUnstable: return "TooManyUnstable";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

}  // namespace nncert
