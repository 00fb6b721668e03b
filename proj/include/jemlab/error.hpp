#pragma once

#include <stdexcept>
#include <string>

namespace jemlab {

// Base of every library error. Each subclass maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when a quantity needed by a metric or probe is mathematically undefined
// (constant input, empty denominator, zero-count row, ...).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

// Model and observer response sets that do not cover the same stimuli.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced during sampling or optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class SamplerDivergence : public DivergenceError {
 public:
  using DivergenceError::DivergenceError;
};

}  // namespace jemlab
