#pragma once

#include <stdexcept>
#include <string>

namespace fpjpa {

// Invalid inputs or violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DegenerateBiasError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DesignError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Failures of the numerics on valid inputs.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public NumericalError {
public:
    SolverError(const std::string& what, double last_residual)
        : NumericalError(what), residual_(last_residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

class ThresholdError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NormalizationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class BandwidthError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace fpjpa
