// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace affectfuse {

// Shape disagreement between operands. Message carries both shapes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside an operation's mathematical domain (log of a nonpositive
// value, probabilities off the simplex, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke an API precondition.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration; message names the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or truncated file; message carries the byte offset.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sequence longer than a declared capacity.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative numerics failed to converge or produced non-finite values.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged; message reports epoch and batch.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace affectfuse
