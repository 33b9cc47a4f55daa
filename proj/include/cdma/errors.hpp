#pragma once

#include <stdexcept>
#include <string>

namespace cdma {

// Input violates an operation's precondition (bad lengths, non-positive noise, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An ensemble or experiment configuration that cannot be honoured.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Exhaustive enumeration requested beyond its size budget.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Random graph construction gave up after its retry budget.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cdma
