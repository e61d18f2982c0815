#pragma once

#include <stdexcept>
#include <string>

namespace lkmrl {

/// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. stepping a terminal state.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values reaching the networks.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// COLA could not sample from the gradient buffer for the current belief.
class AdaptationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace lkmrl
