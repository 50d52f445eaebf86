#pragma once

#include <stdexcept>
#include <string>

namespace bpnn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shape mismatch; the message names both sides.
struct ShapeError : Error {
    using Error::Error;
};

/// A scalar argument is out of its valid range (stddev <= 0, alpha < 1, ...).
struct ValueError : Error {
    using Error::Error;
};

/// A discrete index (token id, label) is out of range.
struct IndexError : Error {
    using Error::Error;
};

/// Configuration document violates the schema; message carries the offending path.
struct ConfigError : Error {
    using Error::Error;
};

/// Incompatible adjacent layers detected while resolving model shapes.
struct BuildError : Error {
    using Error::Error;
};

/// Dataset file is malformed or inconsistent with the declared format.
struct DataError : Error {
    using Error::Error;
};

/// Generic file I/O failure.
struct IoError : Error {
    using Error::Error;
};

/// Model file does not start with the expected magic bytes.
struct BadMagicError : IoError {
    using IoError::IoError;
};

/// Model file was written by a newer format version.
struct VersionError : IoError {
    using IoError::IoError;
};

/// File ended before the declared payload; message carries the byte offset.
struct TruncatedError : IoError {
    using IoError::IoError;
};

/// A non-finite value appeared where the computation requires finite numbers.
struct NumericError : Error {
    using Error::Error;
};

/// API called out of order (backward before forward, step before bind, ...).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace bpnn
