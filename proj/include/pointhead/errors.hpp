#pragma once

#include <stdexcept>
#include <string>

namespace pointhead {

// Error taxonomy shared by every module. The CLI maps ContractError-family
// failures to exit code 2 and NumericError-family failures to exit code 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated precondition or type invariant (bad argument, bad config).
struct ContractError : Error {
    using Error::Error;
};

// Tensor extents do not conform to a kernel's shape rule.
struct ShapeError : ContractError {
    using ContractError::ContractError;
};

// Malformed config / missing parameter path.
struct ConfigError : ContractError {
    using ContractError::ContractError;
};

// Malformed serialized input (dataset line, checkpoint manifest).
struct ParseError : ContractError {
    using ContractError::ContractError;
};

// Schema or checkpoint version mismatch.
struct VersionError : ContractError {
    using ContractError::ContractError;
};

// Filesystem failure (missing dataset, unwritable output).
struct IoError : ContractError {
    using ContractError::ContractError;
};

// Geometrically degenerate input (zero-area polygon, zero-area box union).
struct DegeneracyError : ContractError {
    using ContractError::ContractError;
};

// Non-finite value produced by a computation.
struct NumericError : Error {
    using Error::Error;
};

// A loss builder produced two different values at identical parameters.
struct DeterminismError : NumericError {
    using NumericError::NumericError;
};

} // namespace pointhead
