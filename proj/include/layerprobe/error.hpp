#pragma once

#include <stdexcept>
#include <string>

namespace layerprobe {

// All recoverable failures in the library surface as this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration or input-document problems (CLI maps these to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace layerprobe
