#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ksm {

enum class ErrorKind {
  TooSmall,
  NotStochastic,
  NotIrreducible,
  ComplexSecondEigenvalue,
  ZeroLambda,
  NotKestenStigum,
  InvalidSpec,
  BudgetExceeded,
  NegativeZeta,
  DegenerateGrid,
  WrongPhase,
  InvalidPair,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::NotStochastic: return "NotStochastic";
    case ErrorKind::NotIrreducible: return "NotIrreducible";
    case ErrorKind::ComplexSecondEigenvalue: return "ComplexSecondEigenvalue";
    case ErrorKind::ZeroLambda: return "ZeroLambda";
    case ErrorKind::NotKestenStigum: return "NotKestenStigum";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::NegativeZeta: return "NegativeZeta";
    case ErrorKind::DegenerateGrid: return "DegenerateGrid";
    case ErrorKind::WrongPhase: return "WrongPhase";
    case ErrorKind::InvalidPair: return "InvalidPair";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

// Every failure the library reports carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ksm
