#pragma once

#include <stdexcept>
#include <string>

namespace balsel {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grid/tensor dimensions disagree or are out of range.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Iteration index outside the configured AL schedule.
class ScheduleError : public Error {
 public:
  using Error::Error;
};

// Class id outside [0, num_classes) or too few classes for the operation.
class ClassError : public Error {
 public:
  using Error::Error;
};

// Requested budget cannot be satisfied where the contract forbids shortfall.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value; message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numeric content violates a data contract (negative score, broken simplex).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied state disagrees with the authoritative store.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Metric requested over an empty selection.
class EmptySelectionError : public Error {
 public:
  using Error::Error;
};

// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace balsel
