#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace akt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit together.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A value became NaN/inf, or an input was not finite.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Input violates a documented precondition (labels not one-hot, bad config value, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Operation called in the wrong order (e.g. backward before forward).
class StateError : public Error {
public:
  using Error::Error;
};

/// Batch stream cannot produce another batch.
class StreamError : public Error {
public:
  using Error::Error;
};

/// Binary or text input could not be decoded. Carries the byte offset at which decoding failed.
class ParseError : public Error {
public:
  enum class Kind { bad_magic, truncated, dimension_overflow, version_mismatch, malformed };

  ParseError(Kind kind, std::size_t offset, const std::string& what)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), kind_(kind), offset_(offset) {}

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
  Kind kind_;
  std::size_t offset_;
};

}  // namespace akt
