#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvsde {

/// Invalid configuration or construction input. The CLI maps this to exit status 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operator or function combination without a usable resolvent; raised at construction.
class UnsupportedError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A point outside the domain where an operation requires membership.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A simulation produced non-finite state. The CLI maps this to exit status 2.
class SimulationAbort : public std::runtime_error {
 public:
  SimulationAbort(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace mvsde
