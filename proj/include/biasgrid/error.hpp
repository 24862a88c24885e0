#pragma once

#include <stdexcept>
#include <string>

namespace biasgrid {

// Base for every error the toolkit raises. Callers that only care about
// "something in biasgrid failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace biasgrid
