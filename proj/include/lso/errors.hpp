#pragma once

#include <stdexcept>
#include <string>

namespace lso {

// Configuration / input validation failure (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// The level shift operator does not exist for the requested infrared
// exponent (subcritical p < -1/2; CLI exit code 3).
class NonexistentLSO : public std::runtime_error {
public:
    explicit NonexistentLSO(const std::string& what) : std::runtime_error(what) {}
};

// Quadrature failed to reach the requested tolerance (CLI exit code 4).
// Carries the best estimate achieved so callers can report it.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double achieved_error)
        : std::runtime_error(what), achieved(achieved_error) {}
    double achieved;
};

} // namespace lso
