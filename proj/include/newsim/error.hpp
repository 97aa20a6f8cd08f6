#pragma once

#include <stdexcept>
#include <string>

namespace newsim {

// Base of all errors raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite values encountered during training or evaluation.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace newsim
