#pragma once

#include <stdexcept>
#include <string>

namespace dssl {

// Error categories surfaced by the library. The CLI maps each to an exit code.

/// Invalid or inconsistent configuration (dimensions, hyperparameters, unknown keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition (e.g. non-scalar loss passed to backward).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values or divergence during computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A referenced file or artifact does not exist or cannot be read.
class MissingInputError : public std::runtime_error {
 public:
  MissingInputError(const std::string& path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Input data admits no meaningful answer (e.g. single-class labels for a probe).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dssl
