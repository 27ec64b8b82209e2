#pragma once

#include <stdexcept>
#include <string>

namespace lahja {

// Bad user-supplied values or malformed data. Maps to exit code 1 in the CLI.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unusable configuration (missing columns, zero terms, bad ranges). Exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and stream failures. Exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lahja
