#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dislo {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidGrid : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A non-finite value was found in an input field.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// A provider produced a non-finite value while being sampled.
class SamplingError : public Error {
 public:
  SamplingError(const std::string& what, std::size_t node)
      : Error(what), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

class DegenerateChart : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  SingularMatrix(const std::string& what, std::size_t node, double det)
      : Error(what), node_(node), det_(det) {}
  std::size_t node() const { return node_; }
  double det() const { return det_; }

 private:
  std::size_t node_;
  double det_;
};

/// Index variance or space mismatch in a contraction or conversion.
class SignatureError : public Error {
 public:
  using Error::Error;
};

class InvalidMetric : public Error {
 public:
  using Error::Error;
};

class InvalidTorsion : public Error {
 public:
  using Error::Error;
};

class InvalidInitialValue : public Error {
 public:
  using Error::Error;
};

/// The connection fails the zero-curvature compatibility test, so the
/// Pfaff system has no solution. Carries the measured residual.
class IncompatibleConnection : public Error {
 public:
  IncompatibleConnection(const std::string& what, double residual,
                         double threshold)
      : Error(what), residual_(residual), threshold_(threshold) {}
  double residual() const { return residual_; }
  double threshold() const { return threshold_; }

 private:
  double residual_;
  double threshold_;
};

class GaugeMismatch : public Error {
 public:
  GaugeMismatch(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Numerical failure during time stepping.
class NumericalBlowUp : public Error {
 public:
  NumericalBlowUp(const std::string& what, std::size_t node, double time)
      : Error(what), node_(node), time_(time) {}
  std::size_t node() const { return node_; }
  double time() const { return time_; }

 private:
  std::size_t node_;
  double time_;
};

/// Elastic deformation lost positive definiteness.
class BlowUpError : public NumericalBlowUp {
 public:
  using NumericalBlowUp::NumericalBlowUp;
};

/// A state component became NaN or infinite.
class DivergenceError : public NumericalBlowUp {
 public:
  using NumericalBlowUp::NumericalBlowUp;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dislo
