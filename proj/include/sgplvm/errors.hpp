#pragma once

#include <stdexcept>
#include <string>

namespace sgplvm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched matrix/vector dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// Cholesky or eigendecomposition could not be completed.
struct DecompositionError : Error {
  using Error::Error;
};

// Triangular factor with a zero on its diagonal.
struct SingularError : DecompositionError {
  using DecompositionError::DecompositionError;
};

// Argument outside the operation's domain (negative variance, asymmetry...).
struct InputError : Error {
  using Error::Error;
};

// Non-finite intermediate value during evaluation.
struct NumericError : Error {
  using Error::Error;
};

struct ConditioningError : NumericError {
  using NumericError::NumericError;
};

struct InferenceError : NumericError {
  using NumericError::NumericError;
};

struct ConfigError : Error {
  using Error::Error;
};

// Malformed or inconsistent file contents.
struct DataError : Error {
  using Error::Error;
};

// Operation requested on an object in the wrong lifecycle state.
struct StateError : Error {
  using Error::Error;
};

}  // namespace sgplvm
