#pragma once

#include <stdexcept>
#include <string>

namespace swsteer {

/// Invalid configuration: bad scheme/dimension combinations, malformed
/// config documents, inconsistent simulation settings.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Mathematical precondition violated (probability outside (0,1),
/// time outside the horizon, non-SPD covariance, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure at run time (SPD lost during integration,
/// eigendecomposition failure).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace swsteer
