#pragma once

#include <stdexcept>
#include <string>

namespace rsim {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File layout violates the on-disk format (bad magic, truncated payload,
// malformed manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Payload values violate data invariants (NaN / Inf after load).
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure (unreadable / unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

// Matrices inside a bundle disagree on the shared input count.
class BundleError : public Error {
 public:
  using Error::Error;
};

// Operands have incompatible shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input is degenerate for the requested statistic (rank 0, empty list).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Iteration failed to converge, or a computed value is out of its
// mathematically possible range by more than rounding slack.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A comparison was rejected because its inputs are ill-conditioned
// (too few probe inputs for the subspace dimensions involved).
class IllConditionedError : public Error {
 public:
  using Error::Error;
};

// Unknown target object or an otherwise invalid task description.
class TaskError : public Error {
 public:
  using Error::Error;
};

// Requested cell is unreachable.
class ReachError : public Error {
 public:
  using Error::Error;
};

// Probe-set construction could not satisfy the request.
class ProbeError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite parameter.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsim
