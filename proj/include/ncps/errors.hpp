#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ncps {

/// Input falls outside the Weyl chamber or violates a model invariant.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The implicit-step Newton solve failed (non-convergence, singular Hessian,
/// non-finite input).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver failure inside a time-stepping loop, tagged with the step index.
class StepFailure : public SolverError {
 public:
  StepFailure(std::size_t step, const std::string& what)
      : SolverError("step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed configuration or command-line input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ncps
