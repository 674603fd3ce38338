#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace robagg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: wrong dimension, empty input, value outside its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative kernel failed (eigen-solver, rank-deficient system).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  NotPositiveDefinite(const std::string& what, double eigenvalue)
      : NumericalError(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

class RankDeficient : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Logistic likelihood has no finite maximizer (classes separable).
class Separation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Iteration cap reached. Carries the best iterate and its residual.
class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, Eigen::VectorXd best, double residual)
      : NumericalError(what), best_(std::move(best)), residual_(residual) {}
  const Eigen::VectorXd& best() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

/// Invalid configuration or input file content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace robagg
