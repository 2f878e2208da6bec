#pragma once

#include <stdexcept>
#include <string>

namespace saf {

// Invariant violations on in-memory values (shapes, labels, NaNs).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed on-disk data: bad magic, wrong version, truncated payloads, CSV syntax.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration values or unknown config keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures (missing files, unwritable paths).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace saf
