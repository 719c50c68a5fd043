#pragma once

#include <stdexcept>
#include <string>

namespace lsub {

/// Base of every error thrown by the library. The subclass names the contract that fired.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes, segment tables or config fields that do not fit together.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation called on an object that is not ready for it (e.g. eval without BN stats).
class StateError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied values outside the accepted domain.
class InputError : public Error {
public:
    using Error::Error;
};

/// Non-finite or degenerate arithmetic.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. Messages carry the byte offset where parsing stopped.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lsub
