#pragma once

#include <stdexcept>
#include <string>

namespace dg {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched tensor / vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (distribution shapes, config fields, ids).
class ParamError : public Error {
 public:
  using Error::Error;
};

/// Class label outside the declared range.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong order (stale cache, missing state).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Numeric contract violated (e.g. imaginary residue above tolerance).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file on disk (bad magic, truncation, inconsistent manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Optimizer stepped past its schedule.
class ScheduleError : public Error {
 public:
  using Error::Error;
};

}  // namespace dg
