#pragma once

#include <stdexcept>
#include <string>

namespace mgsim {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an input file or document cannot be parsed.
class ParseError : public Error {
  public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

/// Raised when a device target is unreachable from the current state,
/// i.e. the day-ahead plan is inconsistent with the realized state.
class InfeasibleTarget : public Error {
  public:
    explicit InfeasibleTarget(const std::string& what) : Error(what) {}
};

constexpr double kSecondsPerHour = 3600.0;

inline double seconds_to_hours(double s) { return s / kSecondsPerHour; }

}  // namespace mgsim
