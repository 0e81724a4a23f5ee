#pragma once

#include <stdexcept>
#include <string>

namespace mcscast {

/// Window/horizon extraction failures. These are expected control-flow
/// outcomes near trace boundaries, not programming errors.
struct InsufficientHistoryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientFutureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GapViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TraceTooShortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A pipeline stage was invoked before the stage that produces its input.
/// The message names the missing file and the command that creates it.
struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient, diverged training, or a numeric invariant
/// breach that makes continuing meaningless.
struct NumericFailureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// backward() called with a cache that does not match the current params.
struct StaleCacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mcscast
