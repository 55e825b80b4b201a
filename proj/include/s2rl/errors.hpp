#pragma once

#include <stdexcept>
#include <string>

namespace s2rl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/size disagreements between arrays, layers or datasets.
struct DimensionError : Error {
    using Error::Error;
};

// Non-finite values where finiteness is part of the contract.
struct NumericError : Error {
    using Error::Error;
};

// Bad user input: configs, specs, CLI arguments.
struct ValidationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ChecksumError : IoError {
    using IoError::IoError;
};

struct VersionError : IoError {
    using IoError::IoError;
};

struct TruncatedError : IoError {
    using IoError::IoError;
};

// Offline-dataset generation could not reach its target quality.
struct GenerationError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

}  // namespace s2rl
