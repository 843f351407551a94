#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recert {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An abstract transformer produced an empty interval. Always an
/// implementation bug; never caught inside the library.
class SoundnessViolation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MalformedFile : public IoError {
 public:
  using IoError::IoError;
};

class VersionMismatch : public IoError {
 public:
  using IoError::IoError;
};

class SpecSyntaxError : public Error {
 public:
  SpecSyntaxError(const std::string& what, std::size_t position)
      : Error(what + " at offset " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class UnknownTransformation : public Error {
 public:
  using Error::Error;
};

class ResourceError : public IoError {
 public:
  using IoError::IoError;
};

class EnumerationLimit : public Error {
 public:
  using Error::Error;
};

class PositionRangeError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace recert
