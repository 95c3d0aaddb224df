#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gpal {

/// Bad input: violated precondition, malformed config, inconsistent data.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file did not match the expected binary or JSON layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The payload is shorter than its header declares.
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Could not open, read or write a path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear algebra broke down (Cholesky failure, negative predictive variance).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::vector<double> jitter_ladder = {})
      : std::runtime_error(what), jitter_ladder_(std::move(jitter_ladder)) {}

  /// Jitter values tried before giving up; empty when no factorization was involved.
  const std::vector<double>& jitter_ladder() const noexcept { return jitter_ladder_; }

 private:
  std::vector<double> jitter_ladder_;
};

/// The label source failed or timed out.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpal
