#pragma once

#include <stdexcept>
#include <string>

namespace mgdr {

/// Bad config values, malformed input files, schema violations.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite activations or losses during training.
class DivergenceError : public std::runtime_error {
public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File I/O failures (missing file, short read, bad magic).
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mgdr
