#pragma once

#include <stdexcept>
#include <string>

namespace spme {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The range of y + λΨ(y) (or of a related strictly monotone inclusion) has a
/// gap, so the graph is not maximal monotone.
class NonMaximalGraph : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t got)
        : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(got)) {}
};

/// −L is singular where invertibility is required (ν = 0 norms, λ-level runs).
class NotTransient : public Error {
public:
    using Error::Error;
};

class InvalidBernstein : public Error {
public:
    using Error::Error;
};

/// Requested a carré du champ from an operator that carries no jump kernel.
class NoKernel : public Error {
public:
    using Error::Error;
};

class InvalidParameters : public Error {
public:
    using Error::Error;
};

class NoConvergence : public Error {
public:
    NoConvergence(int iterations, double best_residual)
        : Error("no convergence after " + std::to_string(iterations) +
                " iterations (best residual " + std::to_string(best_residual) + ")"),
          iterations_(iterations), best_residual_(best_residual) {}

    int iterations() const noexcept { return iterations_; }
    double best_residual() const noexcept { return best_residual_; }

private:
    int iterations_;
    double best_residual_;
};

class StabilityViolation : public Error {
public:
    using Error::Error;
};

class ConfigMismatch : public Error {
public:
    using Error::Error;
};

/// Configuration validation failure; `field()` names the offending JSON path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("config error at '" + field + "': " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace spme
