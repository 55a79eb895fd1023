// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace selfres {

// Error hierarchy. Everything thrown by the engine derives from Error so the
// CLI can report one message and exit nonzero.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Index or size outside its admissible interval.
class RangeError : public Error {
 public:
  using Error::Error;
};

// T not a multiple of S.
class DivisibilityError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (layer out of bounds, unknown enum name, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed request documents.
class ParseError : public Error {
 public:
  using Error::Error;
};

// calibrate_beta could not reach the requested recall.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace selfres
