#pragma once

#include <stdexcept>
#include <string>

namespace mpa {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Rating counts / probability vectors that cannot form a distribution.
class InvalidHistogram : public Error {
 public:
  using Error::Error;
};

// Two vectors or tensors that should share a shape do not.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// An operation over a patch set received an empty list.
class EmptyPatchSet : public Error {
 public:
  using Error::Error;
};

// Requested crop does not fit inside the source image.
class PatchTooLarge : public Error {
 public:
  using Error::Error;
};

// Scorer input below the minimum supported side length.
class InputTooSmall : public Error {
 public:
  using Error::Error;
};

// Operation called in a state it does not support (e.g. backward
// without a cached forward pass).
class StateError : public Error {
 public:
  using Error::Error;
};

// Image file could not be decoded; message carries the path.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Malformed manifest line; message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Manifest line parsed but violates the schema (e.g. wrong rating count).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Dataset or split with no usable entries.
class EmptyDataset : public Error {
 public:
  using Error::Error;
};

// Correlation requested on a series with zero variance or fewer than
// two points.
class DegenerateSeries : public Error {
 public:
  using Error::Error;
};

// Argument outside the documented domain of an operation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpa
