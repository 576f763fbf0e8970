#pragma once

#include <stdexcept>
#include <string>

namespace baffle {

/// Base error for everything raised by this library. `exit_code()` is the
/// process exit code the CLI maps the error to (2 usage, 3 format/io,
/// 4 numerical).
class Error : public std::runtime_error {
 public:
  Error(std::string message, int exit_code)
      : std::runtime_error(std::move(message)), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

/// Caller violated a precondition (bad argument, shape mismatch, ...).
class UsageError : public Error {
 public:
  explicit UsageError(std::string message) : Error(std::move(message), 2) {}
};

/// Invalid configuration (env spec, experiment config file).
class ConfigError : public UsageError {
 public:
  explicit ConfigError(std::string message) : UsageError(std::move(message)) {}
};

/// Malformed or corrupt file contents (bad magic, truncation, ...).
class FormatError : public Error {
 public:
  explicit FormatError(std::string message) : Error(std::move(message), 3) {}
};

/// Filesystem-level failure (missing file, unwritable path).
class IoError : public Error {
 public:
  explicit IoError(std::string message) : Error(std::move(message), 3) {}
};

/// Numerical failure: divergent training, non-finite loss, non-convergence.
class NumericalError : public Error {
 public:
  explicit NumericalError(std::string message) : Error(std::move(message), 4) {}
};

}  // namespace baffle
