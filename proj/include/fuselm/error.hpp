#pragma once

#include <stdexcept>
#include <string>

namespace fuselm {

// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent sizes, unknown modes, vocab too small for the alphabet.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller passed out-of-range ids or positions.
class InputError : public Error {
 public:
  using Error::Error;
};

// Unreadable file, invalid UTF-8.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed ARTF store, vocab file or checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing key in an artefact store.
class LookupError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in the forward pass or the loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Reading-time alignment failures and degenerate statistics.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fuselm
