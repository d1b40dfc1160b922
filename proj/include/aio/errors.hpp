#pragma once

#include <stdexcept>
#include <string>

namespace aio {

// Invalid user-supplied parameter (sigma <= 0, transmission out of range, ...).
class ParamError : public std::runtime_error {
public:
  explicit ParamError(const std::string& what) : std::runtime_error(what) {}
};

// Violated call contract (shape mismatch, undersized input, frozen-state misuse).
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Bad or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Missing external dependency (weight files, input images).
class DependencyError : public std::runtime_error {
public:
  explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

// Training diverged or produced non-finite values.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric domain violation (zero vector in cosine similarity, ...).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Pipeline stages invoked out of order (stage 2 before stage 1).
class PipelineError : public std::runtime_error {
public:
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aio
