#pragma once

#include <stdexcept>
#include <string>

namespace vmb {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector dimensions (or embedding spaces) do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A zero-norm vector where a direction is required.
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (empty vocabulary category, odd d_model, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated on-disk file. Message carries the byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inconsistent data passed across module boundaries (unresolved ids, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes do not match the operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Scalar argument outside its documented range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced where finite math is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// API called out of order (e.g. backward without a recorded forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Retrieval over a space with no candidates at all.
class EmptyIndexError : public Error {
 public:
  using Error::Error;
};

// Unknown partition category or subset name.
class PartitionError : public Error {
 public:
  using Error::Error;
};

// Known subset with zero members; callers may fall back to broad retrieval.
class EmptyPartitionError : public PartitionError {
 public:
  using PartitionError::PartitionError;
};

// Filesystem-level failure (cannot open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vmb
