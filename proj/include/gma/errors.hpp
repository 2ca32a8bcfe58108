#pragma once

#include <stdexcept>
#include <string>

namespace gma {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor dimensions.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A precondition on an operation's arguments was violated.
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Bad run configuration (unknown key, invalid value, inconsistent sizes).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf showed up where only finite values are allowed.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File read/write failure.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace gma
