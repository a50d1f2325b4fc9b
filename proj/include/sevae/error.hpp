#pragma once

#include <stdexcept>
#include <string>

namespace sevae {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (corpus files, splits, configs).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an op, failed gradient check, or a graph misuse.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Bad checkpoint file: truncated, wrong version, wrong spec, wrong shapes.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Caller-side misuse that is not a data problem.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace sevae
