#pragma once

#include <stdexcept>
#include <string>

namespace ncl {

/// Base of all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on user-supplied input was violated (bad grid, bad kernel, bad config).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed: non-convergence, instability, step failure.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Thrown when a shifted operator matrix is reducible, so no strictly positive
/// Perron vector exists. Usually a tophat/table kernel whose support is too
/// narrow to connect the grid.
class ReducibleMatrixError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Thrown when a requested steady state does not exist (principal bound <= 0).
class NonexistenceError : public Error {
public:
    using Error::Error;
};

/// An input file or configuration document could not be parsed or validated.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace ncl
