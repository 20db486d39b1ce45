#pragma once

#include <stdexcept>
#include <string>

namespace urecon {

// Violated preconditions and API misuse (bad sizes, bad arguments).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Incompatible tensor/image dimensions.
struct ShapeError : ContractError {
  explicit ShapeError(const std::string& msg) : ContractError(msg) {}
};

// NaN/Inf appeared in a computation, divergence during training.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O failures, always carrying the offending path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown keys, unparsable values).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace urecon
