#pragma once

#include <stdexcept>
#include <string>

namespace docgraph {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf produced by (or fed into) a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc {
  BadMagic,
  VersionMismatch,
  TruncatedPayload,
  NonFiniteValue,
  MixedDimensions,
  Malformed,
};

const char* to_string(FormatErrc code);

// Malformed binary or text input. `code()` distinguishes the defect.
class FormatError : public Error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

}  // namespace docgraph
