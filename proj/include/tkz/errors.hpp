#pragma once

#include <stdexcept>
#include <string>

namespace tkz {

/// Dimension mismatch between operands (wrong shapes for a product, fold, ...).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Out-of-range or repeated slice index.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

/// Invalid configuration: bad block-set parameters, unknown protocol, budget exceeded.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A precondition of the solver theory does not hold numerically
/// (singular block gram, vanishing column spectrum, ...).
struct AssumptionViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Internal consistency check failed (e.g. imaginary residue after an
/// inverse transform of data that should be real).
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File format / filesystem failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tkz
