#pragma once

#include <stdexcept>
#include <string>

namespace pgvton {

/// Base class for all pgvton errors. The CLI maps the three concrete
/// categories to exit codes 1 (validation), 2 (I/O), 3 (numerical).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

}  // namespace pgvton
