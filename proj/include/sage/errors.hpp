#pragma once

#include <stdexcept>
#include <string>

namespace sage {

// Configuration / input validation problems. CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure states (NaN/Inf in a public tensor op, saturated
// evidence, aborted training). CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cholesky decomposition failed; `pivot` is the zero-based index of the
// first non-positive pivot encountered.
class CholeskyError : public NumericalError {
public:
    CholeskyError(const std::string& msg, int pivot_index)
        : NumericalError(msg), pivot(pivot_index) {}
    int pivot;
};

// Two opinions are in (near-)total conflict: 1 - F fell below the guard.
class ConflictError : public NumericalError {
public:
    ConflictError(const std::string& msg, double conflict_mass)
        : NumericalError(msg), conflict(conflict_mass) {}
    double conflict;
};

// Inverting masses with u == 0 would require infinite evidence.
class SaturationError : public NumericalError {
public:
    explicit SaturationError(const std::string& msg) : NumericalError(msg) {}
};

// Tensor shape disagreement.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Filesystem / serialization problems. CLI maps these to exit code 3.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sage
