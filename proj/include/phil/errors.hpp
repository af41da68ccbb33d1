#pragma once

#include <stdexcept>
#include <string>

namespace phil {

/// Invalid scenario or component configuration (bad values, mismatched rates).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure while evaluating or running a model.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Denominator of a rational block vanishes on the imaginary axis.
class PoleOnAxisError : public NumericError {
public:
    explicit PoleOnAxisError(const std::string& what) : NumericError(what) {}
};

/// Co-simulation master protocol violation: refused grants, causality
/// breaches, zero-lookahead deadlocks, bad wiring.
class CosimError : public std::runtime_error {
public:
    explicit CosimError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace phil
