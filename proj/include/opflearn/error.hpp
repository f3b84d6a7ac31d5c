#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opflearn {

/// Failure categories surfaced by the library. The CLI prints the category
/// name as the first token of its single-line error message.
enum class ErrorKind {
  MissingBlock,
  MalformedRow,
  InvalidCase,
  NoSlackBus,
  NoConvergence,
  NumericalFailure,
  EmptyPolytope,
  Unbounded,
  StuckSampler,
  AttemptBudgetExhausted,
  SchemaMismatch,
  IoError,
  DegenerateData,
  FingerprintMismatch,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingBlock:
      return "MissingBlock";
    case ErrorKind::MalformedRow:
      return "MalformedRow";
    case ErrorKind::InvalidCase:
      return "InvalidCase";
    case ErrorKind::NoSlackBus:
      return "NoSlackBus";
    case ErrorKind::NoConvergence:
      return "NoConvergence";
    case ErrorKind::NumericalFailure:
      return "NumericalFailure";
    case ErrorKind::EmptyPolytope:
      return "EmptyPolytope";
    case ErrorKind::Unbounded:
      return "Unbounded";
    case ErrorKind::StuckSampler:
      return "StuckSampler";
    case ErrorKind::AttemptBudgetExhausted:
      return "AttemptBudgetExhausted";
    case ErrorKind::SchemaMismatch:
      return "SchemaMismatch";
    case ErrorKind::IoError:
      return "IoError";
    case ErrorKind::DegenerateData:
      return "DegenerateData";
    case ErrorKind::FingerprintMismatch:
      return "FingerprintMismatch";
    case ErrorKind::InvalidArgument:
      return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace opflearn
