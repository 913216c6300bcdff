#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace detpol {

// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (b outside [0,1], α outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Quantile of a measure with zero total mass.
class DegenerateMeasureError : public Error {
 public:
  using Error::Error;
};

// A model, policy or document that violates an invariant. `path` names the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Policy partition does not refine the base grid of the model it is applied to.
class PartitionMismatch : public Error {
 public:
  using Error::Error;
};

// No uniform-absorption certificate could be produced.
class NotCertifiedError : public Error {
 public:
  using Error::Error;
};

// A weighted-norm condition fails on some (cell, action).
class CertificateFailure : public Error {
 public:
  CertificateFailure(const std::string& what, int cell, int action)
      : Error(what), cell_(cell), action_(action) {}

  int cell() const noexcept { return cell_; }
  int action() const noexcept { return action_; }

 private:
  int cell_;
  int action_;
};

// Conserving-action band produced an empty action set.
class ToleranceError : public Error {
 public:
  using Error::Error;
};

// Target point is not in the performance set (or not decidably so at this resolution).
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, bool undecidable = false)
      : Error(what), undecidable_(undecidable) {}

  bool undecidable() const noexcept { return undecidable_; }

 private:
  bool undecidable_;
};

// An iterative construction stopped without reaching the requested tolerance.
// Carries the best error it did reach; never raised silently in place of a result.
class CertifiedFailure : public Error {
 public:
  CertifiedFailure(const std::string& what, double residual)
      : Error(what + " (residual " + short_residual(residual) + ")"), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  static std::string short_residual(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
  }
  double residual_;
};

// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace detpol
