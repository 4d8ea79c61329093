// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cfmimo {

// Every failure raised by the library derives from Error so callers (and the
// CLI's exit-code mapping) can dispatch on the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the operation's domain (bad distance, malformed subset, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Configuration that the model cannot represent (tau_p < K, missing weights, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfiguration : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Corrupt, truncated or mismatched binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Division by a zero norm, failed solve residual, NaN loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfmimo
