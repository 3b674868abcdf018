#pragma once

#include <stdexcept>
#include <string>

namespace sonata {

// Invalid parameters or configuration; the CLI maps this to exit code 2.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A requested evaluation is outside the domain of a formula.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConnectivityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The operation needs information the inputs do not expose (e.g. Hessians).
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  double residual;
  ConvergenceError(const std::string& what, double res)
      : std::runtime_error(what), residual(res) {}
};

}  // namespace sonata
