#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cweibull {

// Base of every error thrown by the library. The CLI maps the concrete
// subclass onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent model structure, dimensions or file contents.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of a model function (t <= 0 and friends).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (tolerances, truncation point, penalties).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Overflow / non-finite intermediate. Carries the offending subject, if any.
class NumericError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t subject = npos)
      : Error(what), subject_(subject) {}

  std::size_t subject() const noexcept { return subject_; }

 private:
  std::size_t subject_;
};

// Censoring-rate bisection could not bracket the target.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Time-dependent ROC horizon without cases or without controls.
class DegenerateHorizonError : public Error {
 public:
  using Error::Error;
};

// Observed information not invertible.
class SingularHessianError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cweibull
