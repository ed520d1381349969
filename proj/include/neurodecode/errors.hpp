#pragma once

#include <stdexcept>
#include <string>

namespace neurodecode {

// Base of every error raised by the library. The CLI maps the subclasses onto
// exit codes: ConfigError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, singular systems, failed factorizations.
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  io,
  bad_magic,
  version_mismatch,
  unsupported_dtype,
  truncated_payload,
  length_mismatch,
  bad_manifest,
};

const char* to_string(FormatErrorKind kind);

// Container/manifest decoding failures. kind() distinguishes the documented
// failure modes so callers (and tests) do not have to match on messages.
class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : DataError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace neurodecode
