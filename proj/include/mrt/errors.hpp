#pragma once

#include <stdexcept>

namespace mrt {

/// Bad arguments, malformed configuration, or violated preconditions.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent data files (CSV/JSON inputs).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-positive-definite covariance, diverged fit, rate overflow.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Inconsistent analysis inputs (misaligned histories, mismatched update calendars).
struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mrt
