#pragma once

#include <stdexcept>
#include <string>

namespace heteroflux {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mobility curve or rock model violates its structural invariants.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// Both phase mobilities vanish at the evaluation point.
class DegenerateMobility : public Error {
 public:
  using Error::Error;
};

/// A flux profile has more than one interior local maximum.
class NotUnimodal : public Error {
 public:
  using Error::Error;
};

/// Initial data outside [0,1] or malformed breakpoints.
class InvalidData : public Error {
 public:
  using Error::Error;
};

/// The time step violates the stability bound lambda * M <= 1.
class CflViolation : public Error {
 public:
  CflViolation(std::string scheme, double lambda, double m)
      : Error("CFL violation for scheme " + scheme + ": lambda=" + std::to_string(lambda) +
              ", M=" + std::to_string(m) + ", lambda*M=" + std::to_string(lambda * m) + " > 1"),
        scheme_(std::move(scheme)),
        lambda_(lambda),
        m_(m) {}

  const std::string& scheme() const { return scheme_; }
  double lambda() const { return lambda_; }
  double stability_constant() const { return m_; }

 private:
  std::string scheme_;
  double lambda_;
  double m_;
};

/// An updated cell value left [0,1]; this signals a defect, never clamped.
class BoundsViolation : public Error {
 public:
  using Error::Error;
};

/// A run finished but broke a scheme property (L1 contraction, conservation).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Root finding for an interface trace failed on the requested branch.
class NoAdmissibleTrace : public Error {
 public:
  using Error::Error;
};

/// Bad command-line flag or model-file entry. Carries the offending location.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace heteroflux
