#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dbaf {

enum class Errc {
  NonPositiveDepth,
  InvalidInverseDepth,
  InvalidArgument,
  MixedAnchor,
  IndexOutOfWindow,
  Degenerate,
  EmptyBatch,
  NonMonotonicTime,
  TimeMismatch,
  GapTooLarge,
  NotAligned,
  SingularSystem,
  DanglingFactor,
  NotInitialized,
  InsufficientExcitation,
  DegenerateGeometry,
  InsufficientNeighbors,
  ParseError,
  MissingField,
  TooFewPairs,
  TrajectoryTooShort,
  IoError,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(std::string source, int line, int column, const std::string& what)
      : Error(Errc::ParseError, source + ":" + std::to_string(line) + ":" +
                                    std::to_string(column) + ": " + what),
        source_(std::move(source)),
        line_(line),
        column_(column) {}

  const std::string& source() const noexcept { return source_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  std::string source_;
  int line_;
  int column_;
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NonPositiveDepth: return "NonPositiveDepth";
    case Errc::InvalidInverseDepth: return "InvalidInverseDepth";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MixedAnchor: return "MixedAnchor";
    case Errc::IndexOutOfWindow: return "IndexOutOfWindow";
    case Errc::Degenerate: return "Degenerate";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::NonMonotonicTime: return "NonMonotonicTime";
    case Errc::TimeMismatch: return "TimeMismatch";
    case Errc::GapTooLarge: return "GapTooLarge";
    case Errc::NotAligned: return "NotAligned";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::DanglingFactor: return "DanglingFactor";
    case Errc::NotInitialized: return "NotInitialized";
    case Errc::InsufficientExcitation: return "InsufficientExcitation";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::InsufficientNeighbors: return "InsufficientNeighbors";
    case Errc::ParseError: return "ParseError";
    case Errc::MissingField: return "MissingField";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::TrajectoryTooShort: return "TrajectoryTooShort";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace dbaf
