#pragma once

#include <stdexcept>
#include <string>

namespace lano {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A primitive received operands whose shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, version, endianness marker or truncated payload in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A time integrator produced a non-finite or out-of-range value.
class SolverDiverged : public Error {
 public:
  SolverDiverged(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Training produced a non-finite loss or gradient.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace lano
