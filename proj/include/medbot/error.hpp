#pragma once

#include <stdexcept>
#include <string>

namespace medbot {

// Base of every error thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class UnknownNodeError : public NotFoundError {
 public:
  using NotFoundError::NotFoundError;
};

class UnknownDrugError : public NotFoundError {
 public:
  using NotFoundError::NotFoundError;
};

class UndefinedConditionalError : public Error {
 public:
  using Error::Error;
};

class OutOfOrderError : public Error {
 public:
  using Error::Error;
};

class PersistenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace medbot
