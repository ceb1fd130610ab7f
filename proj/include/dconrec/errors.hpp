#pragma once

#include <stdexcept>
#include <string>

namespace dconrec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or contract violation on a call.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Empty datasets, empty selections, exhausted samplers.
class DataError : public Error {
 public:
  using Error::Error;
};

// Nonfinite values during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dconrec
