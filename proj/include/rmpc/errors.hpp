#pragma once

#include <stdexcept>
#include <string>

namespace rmpc {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A pivot fell below the singularity tolerance, or a matrix is structurally
/// not invertible (e.g. not square where a solve requires it).
class SingularError : public Error {
public:
    explicit SingularError(const std::string& what) : Error(what) {}
};

/// An iterative solve exhausted its iteration budget or stalled.
class NoConvergenceError : public Error {
public:
    explicit NoConvergenceError(const std::string& what) : Error(what) {}
};

/// Water level at or below the channel bed.
class DryBedError : public Error {
public:
    explicit DryBedError(const std::string& what) : Error(what) {}
};

/// Discharge dropped to zero or reversed; the friction linearisation assumes
/// strictly positive flow.
class FlowReversalError : public Error {
public:
    explicit FlowReversalError(const std::string& what) : Error(what) {}
};

/// Invalid problem or experiment configuration (bad bounds, dimension
/// mismatch, rank precondition failure, unparsable config file).
class ConfigurationError : public Error {
public:
    explicit ConfigurationError(const std::string& what) : Error(what) {}
};

/// Invalid argument to a numerical routine (zero step size, empty matrix).
class InvalidArgumentError : public Error {
public:
    explicit InvalidArgumentError(const std::string& what) : Error(what) {}
};

/// A certificate was requested at a point whose KKT residual is too large.
class NotAKktPointError : public Error {
public:
    explicit NotAKktPointError(const std::string& what) : Error(what) {}
};

/// File could not be opened or written.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace rmpc
