#pragma once

#include <stdexcept>
#include <string>

namespace frcap {

// Base for every error raised by the library. The CLI maps ValidationError
// to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A numeric parameter outside its admissible range (p < 1, c <= 0, ...).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Factorization failed (matrix not symmetric positive definite, singular).
class DecompositionError : public Error {
 public:
  using Error::Error;
};

// Operation requested in a configuration it does not support.
class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

// Malformed input files or configuration documents.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A run that started but could not complete (divergence, unwritable output).
class RunFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace frcap
