#pragma once

#include <stdexcept>
#include <string>

namespace labpolicy {

// Error categories map onto CLI exit codes (2 config, 3 data, 4 numeric).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace labpolicy
