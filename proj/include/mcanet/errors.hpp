#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcanet {

// Invalid shapes, hyperparameters, or indices supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or semantically invalid input data (labels, manifests, batches).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary or text file that does not follow its documented layout.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A gradient or activation became NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Command-line or config-file misuse.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcanet
