#pragma once

#include <stdexcept>
#include <string>

namespace lifshitz {

/// Base class for all library errors. Each kind maps onto a process exit
/// code used by the command line runner.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or arguments (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// A precondition of an operation was violated by the caller.
class ContractError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Requested problem size exceeds a hard cap.
class ResourceError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Solver breakdown, non-convergence or a failed numerical assertion (exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class InsufficientDataError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Filesystem failures (exit code 4).
class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace lifshitz
