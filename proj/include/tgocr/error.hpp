#pragma once

#include <stdexcept>
#include <string>

namespace tgocr {

// Error taxonomy shared by the whole library. The CLI maps any of these to
// exit code 1; command-line usage problems exit 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// invalid extents or element-count overflow
struct SizeError : Error {
    using Error::Error;
};

// operand dimensions do not fit together
struct ShapeError : Error {
    using Error::Error;
};

// bad hyperparameter or option value
struct ConfigError : Error {
    using Error::Error;
};

// malformed labels, targets, CSV rows, dataset layout
struct DataError : Error {
    using Error::Error;
};

// operation invoked out of sequence (e.g. backward before forward)
struct StateError : Error {
    using Error::Error;
};

// unreadable or unsupported image file
struct DecodeError : Error {
    using Error::Error;
};

// filesystem failures
struct IoError : Error {
    using Error::Error;
};

// malformed or corrupted checkpoint file
struct CheckpointError : Error {
    using Error::Error;
};

} // namespace tgocr
