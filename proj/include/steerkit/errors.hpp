#pragma once

#include <stdexcept>
#include <string>

namespace steerkit {

// Base for every error raised by the library. The harness maps these to
// nonzero exit codes; callers that only care about failure catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition on the inputs does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class DecompositionError : public Error {
 public:
  using Error::Error;
};

// LayerNorm of an (almost) constant vector.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A ratio whose denominator vanished (e.g. relative error against zero).
class UndefinedRatioError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Loss blew up by more than the configured factor.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace steerkit
