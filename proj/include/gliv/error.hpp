#pragma once

#include <stdexcept>
#include <string>

namespace gliv {

// Malformed input: bad labels, inconsistent configs, unusable CSV rows.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A fit or estimate could not be produced from otherwise valid input
// (empty instrument cell, rank-deficient design, ...).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The identified subpopulation is (numerically) empty, so a ratio
// estimator has no meaningful value.
class DegeneracyError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

}  // namespace gliv
