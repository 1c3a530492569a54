// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace topoflow {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (non-scalar loss, bad basis, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument lies outside the domain of the function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A required entry (coupling matrix, parameter, key) is absent.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A fusion system or mask violates one of its structural constraints.
class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

/// The mask projection could not reach the consistency tolerance.
class ProjectionError : public Error {
 public:
  ProjectionError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Malformed input text (spec files, config files, CSV, JSON lines).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An attention row has every cell forbidden.
class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

/// The symmetric lift of a mask is not positive definite.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

}  // namespace topoflow
