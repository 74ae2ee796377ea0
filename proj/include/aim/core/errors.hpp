#pragma once

#include <stdexcept>
#include <string>

namespace aim {

/// Shape or argument contract broken by the caller.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A data-structure invariant would be broken (e.g. actor/buffer mismatch).
struct InvariantViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Sampling or a statistic requested from an empty collection.
struct EmptySource : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation not allowed in the current state (e.g. stepping a finished episode).
struct InvalidState : std::logic_error {
  using std::logic_error::logic_error;
};

/// Non-finite values reached an optimizer.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The scripted expert could not find a plan.
struct NoPlan : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The operation does not apply to this environment kind.
struct Unsupported : std::logic_error {
  using std::logic_error::logic_error;
};

/// The quantity is undefined on the given input (e.g. ratio with zero denominator).
struct Undefined : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace aim
