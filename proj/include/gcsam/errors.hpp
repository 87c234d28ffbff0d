#pragma once

#include <stdexcept>
#include <string>

namespace gcsam {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform (bad matmul dims, elementwise mismatch, ...).
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid argument, config value, or contract violation detected up front.
/// CLI maps this family to exit code 1.
struct ValidationError : Error {
  using Error::Error;
};

/// Config file could not be parsed or contains unknown/ill-typed keys.
struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

/// File ingestion failed (missing column, non-numeric cell, ...).
struct IngestError : ValidationError {
  using ValidationError::ValidationError;
};

/// A numerical evaluation hit a non-finite value or failed mid-run.
struct EvalError : Error {
  using Error::Error;
};

/// A closed-form expression was evaluated outside its domain.
struct DomainError : Error {
  using Error::Error;
};

}  // namespace gcsam
