#pragma once

#include <stdexcept>
#include <string>

namespace spx {

/// Base class for all library failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an input (model, config, argument) violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Raised when an integer result would not fit the return type.
class OverflowError : public Error {
public:
    using Error::Error;
};

}  // namespace spx
