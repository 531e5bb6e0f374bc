#pragma once

#include <stdexcept>
#include <string>

namespace goldnas {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor operands with inconsistent dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input document (architecture JSON, config file, CSV, CIFAR binary).
/// The message carries the location (line, field or byte offset).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a domain rule (illegal gate, bad shape, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A run could not continue: non-finite loss, unreachable budget and similar.
class RuntimeAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace goldnas
