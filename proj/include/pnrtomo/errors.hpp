#pragma once

#include <stdexcept>
#include <string>

namespace pnrtomo {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A parameter or matrix fails its domain contract (range, shape, invariant).
struct InvalidArgument : Error {
  using Error::Error;
};

// Requested operation cannot be represented faithfully in the truncated
// Fock space: the weight pushed past the cutoff exceeds the stated budget.
struct TruncationError : Error {
  using Error::Error;
};

// An estimator was handed data it cannot act on (zero counts in a required
// bin, single amplitude in a fit, zero herald probability, ...).
struct DegenerateInput : Error {
  using Error::Error;
};

struct ZeroProbabilityHerald : DegenerateInput {
  using DegenerateInput::DegenerateInput;
};

struct InsufficientTwoPhotonEvents : DegenerateInput {
  using DegenerateInput::DegenerateInput;
};

struct IllConditionedFit : DegenerateInput {
  using DegenerateInput::DegenerateInput;
};

// Run configuration failed validation (unknown key, out-of-range value).
struct ConfigError : Error {
  using Error::Error;
};

// A dataset file does not conform to the schema this build understands.
struct SchemaError : Error {
  using Error::Error;
};

// Filesystem-level failure while reading or writing run artifacts.
struct IoError : Error {
  using Error::Error;
};

}  // namespace pnrtomo
