#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / axis mismatches between tensors and layer parameters.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Batch-norm style train-mode call with a batch too small to normalize.
class DegenerateBatchError : public Error {
 public:
  explicit DegenerateBatchError(const std::string& msg) : Error(msg) {}
};

// Missing gradients or inconsistent optimizer state.
class OptimizerError : public Error {
 public:
  explicit OptimizerError(const std::string& msg) : Error(msg) {}
};

// Malformed dataset files, out-of-range labels, protocol violations.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Bad run configuration or command-line usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A validation check that cannot run (e.g. non-deterministic loss).
class CheckInvalidError : public Error {
 public:
  explicit CheckInvalidError(const std::string& msg) : Error(msg) {}
};

}  // namespace cascade
