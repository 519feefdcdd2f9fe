#pragma once

#include <stdexcept>
#include <string>

namespace mfg {

/// Base for failures of the numerical pipeline (exit code 1 in the CLI).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input shapes or violated preconditions.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value outside the attainable range of a monotone map.
class RangeError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// The damped fixed-point coupling failed to reach its tolerance.
class PicardDivergence : public NumericError {
 public:
  PicardDivergence(const std::string& what, int iterations, double residual)
      : NumericError(what), iterations_(iterations), residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// A time step produced non-finite values or a density below the floor.
class StepFailure : public NumericError {
 public:
  StepFailure(const std::string& what, int time_level)
      : NumericError(what + " (time level " + std::to_string(time_level) + ")"),
        time_level_(time_level) {}
  int time_level() const noexcept { return time_level_; }

 private:
  int time_level_;
};

/// Malformed or inconsistent experiment configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfg
