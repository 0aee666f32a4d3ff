#pragma once

#include <stdexcept>
#include <string>

namespace hafuse {

// Base class for every recoverable failure raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up (wrong rank usage, mismatched channels, ...).
struct DimensionError : Error { using Error::Error; };
// An op's output would be empty (kernel larger than padded input, ...).
struct GeometryError : Error { using Error::Error; };
// Bad op or config parameter (even conv1d kernel, zero stride, ...).
struct ParameterError : Error { using Error::Error; };
// API misuse: backward from a non-scalar, missing gradient entry, ...
struct ContractError : Error { using Error::Error; };
// Non-finite value produced where finiteness is guaranteed.
struct NumericError : Error { using Error::Error; };
// Malformed file contents (image headers, checkpoints, configs).
struct ParseError : Error { using Error::Error; };
// Filesystem-level failure (missing file, short write).
struct IoError : Error { using Error::Error; };
// Unknown key or invalid value in a run configuration.
struct ConfigError : Error { using Error::Error; };

} // namespace hafuse
