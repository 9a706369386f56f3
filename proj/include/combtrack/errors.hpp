#pragma once

#include <stdexcept>
#include <string>

namespace combtrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument is outside the domain of the operation (negative power, bad index, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Two inputs disagree in size.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A numerical routine cannot continue (non-positive innovation variance, singular matrix).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A file on disk is malformed.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A configuration or command-line value is invalid. Maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace combtrack
