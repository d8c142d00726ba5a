#pragma once

#include <stdexcept>
#include <string>

namespace flowcap {

// Base for all library-thrown conditions; catch this to map to a CLI exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke a documented precondition (bad shape, parameter out of range).
class ContractViolation : public Error {
public:
    explicit ContractViolation(const std::string& msg) : Error(msg) {}
};

// Inputs fail a mathematical hypothesis a construction needs (e.g. matched
// tail mass, matched CDF values at support edges).
class HypothesisViolation : public Error {
public:
    explicit HypothesisViolation(const std::string& msg) : Error(msg) {}
};

// Layer parameters do not define a bijection (invertibility guard failed).
class InvertibilityViolation : public Error {
public:
    explicit InvertibilityViolation(const std::string& msg) : Error(msg) {}
};

// A derivative-based quantity was requested exactly on a kink of a
// piecewise-linear map, where it is undefined.
class NonSmoothPoint : public Error {
public:
    explicit NonSmoothPoint(const std::string& msg) : Error(msg) {}
};

// An iteration failed to converge within its budget.
class NumericFailure : public Error {
public:
    explicit NumericFailure(const std::string& msg) : Error(msg) {}
};

// A quadrature window failed to capture enough probability mass.
class CoverageError : public Error {
public:
    explicit CoverageError(const std::string& msg) : Error(msg) {}
};

// A construction would exceed a hard resource cap (e.g. piece count).
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& msg) : Error(msg) {}
};

} // namespace flowcap
