#pragma once

#include <stdexcept>
#include <string>

namespace spgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its admissible range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& what, long expected, long actual)
      : Error(what + ": expected dimension " + std::to_string(expected) +
              ", got " + std::to_string(actual)) {}
};

/// A sampler state or gradient contained NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// The warm-up objective blew up; the step size is too large.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A linear system required by an oracle is singular.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

inline void require_dim(const std::string& what, long expected, long actual) {
  if (expected != actual) throw DimensionMismatch(what, expected, actual);
}

}  // namespace detail
}  // namespace spgd
