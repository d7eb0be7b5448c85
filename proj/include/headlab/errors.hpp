#pragma once

#include <stdexcept>
#include <string>

namespace headlab {

/// Precondition violated by the caller (bad shape, non-finite value, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Object used in the wrong state, e.g. backward before forward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A constructive approximator could not be built; the message names the
/// violated inequality.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace headlab
