#pragma once

#include <stdexcept>
#include <string>

namespace fastlane {

// Base for every error raised by the library. The CLI maps these to exit
// code 1; usage problems (bad flags) map to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Violated call contract (e.g. backward() on a non-scalar root).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RoutingError : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Raised when an index file holds a different kind than requested.
class IndexKindError : public IndexError {
 public:
  using IndexError::IndexError;
};

// Malformed or truncated on-disk data (tensors, manifests, archives, corpora).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IngestError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fastlane
