#pragma once

#include <stdexcept>
#include <string>

namespace mscod {

// Base for every error raised by the library. The C API maps each subclass
// onto one of the mscod_status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed by a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed complex file, checkpoint or config text.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid parameter values or config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation tape (non-scalar root, double backward).
class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace mscod
