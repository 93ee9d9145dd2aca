#pragma once

#include <stdexcept>
#include <string>

namespace swarmdiff {

/// Base of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of an operation (out-of-bounds query,
/// invalid parameter range).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numeric precondition failed (non-SPD matrix, ill-conditioning, NaN).
class NumericError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace swarmdiff
