#pragma once

#include <stdexcept>
#include <string>

namespace mirrorlab {

/// Bad user input: dimension out of range, malformed config, unreachable horizon.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A structural invariant of the model was violated. Always a bug.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// API misuse, e.g. comparing law tables of different horizons.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reading or writing an output or input file failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mirrorlab
