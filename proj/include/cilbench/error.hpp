#pragma once

#include <stdexcept>
#include <string>

namespace cilbench {

// Base for every failure the library reports on purpose. Construction-time
// validation of value types throws std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent traffic on the detector wire.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// The detector backend reported a failure, or the channel died.
class DetectorError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public DetectorError {
 public:
  using DetectorError::DetectorError;
};

}  // namespace cilbench
