#pragma once

#include <stdexcept>
#include <string>

namespace dne {

// Invalid configuration or mismatched artifacts (genome length, unknown game, bad config key).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated binary file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dne
