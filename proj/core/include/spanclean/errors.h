#pragma once

#include <stdexcept>
#include <string>

namespace spanclean {

// Base class for recoverable pipeline failures. Each subclass maps onto one
// process exit code in the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

// Invalid configuration or unsatisfiable request (exit 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

// Malformed or unreadable input data (exit 3).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

class ParseError : public DataError {
 public:
  ParseError(size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values showed up in a computation (exit 4).
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

// A caller broke a documented precondition. Programming error, not data.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace spanclean
