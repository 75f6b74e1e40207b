#pragma once

#include <stdexcept>
#include <string>

namespace layoutdiff {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A layout has more elements than the configured capacity.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside its mathematical domain (bad threshold, bad step order, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Shapes or dimensions disagree with the model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system, image codec, or serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace layoutdiff
