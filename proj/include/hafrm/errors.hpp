#pragma once

#include <stdexcept>
#include <string>

namespace hafrm {

// Every error raised by the library derives from Error. The CLI maps
// NumericError to exit code 3 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation precondition (empty batch, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

// Unreadable or version-mismatched checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace hafrm
