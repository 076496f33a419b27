#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gdaip {

/// Dense f64 matrix used throughout. Row-major so per-vertex rows are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent user input. CLI exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between artifacts (checkpoint vs graph, etc). Reported as an input error.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// Inconsistent tensor shapes while building a computation tape.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. CLI exit code 3.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, const std::string& what)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Filesystem failure. CLI exit code 4.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gdaip
