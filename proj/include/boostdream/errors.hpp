#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace boostdream {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration value. key() names the offending setting when known.
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& what) : Error(what) {}
    ConfigError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

// Malformed field checkpoint, image or wire tensor.
class FormatError : public Error {
  public:
    using Error::Error;
};

// Unreadable or invalid mesh input.
class LoadError : public Error {
  public:
    using Error::Error;
};

// NaN/inf detected in gradients or losses.
class NumericError : public Error {
  public:
    using Error::Error;
};

// Connection failure, non-200 status or malformed response from the sidecar.
class TransportError : public Error {
  public:
    TransportError(const std::string& what, int attempts)
        : Error(what + " (after " + std::to_string(attempts) + " attempt(s))"), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

  private:
    int attempts_;
};

// Guidance backend returned something unusable (shape mismatch, NaN).
class GuidanceError : public Error {
  public:
    using Error::Error;
};

}  // namespace boostdream
