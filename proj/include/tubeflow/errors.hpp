#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tubeflow {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Trajectory / config file could not be parsed. `line` is 1-based, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Numerical failure: non-finite values, non-convergence, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Pressure reached the singular wall-law threshold.
class WallBlowUp : public NumericalError {
 public:
  WallBlowUp(const std::string& what, std::size_t node)
      : NumericalError(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, std::vector<double> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class CouplingDivergence : public NumericalError {
 public:
  CouplingDivergence(const std::string& what, std::vector<double> residuals)
      : NumericalError(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : NumericalError(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace tubeflow
