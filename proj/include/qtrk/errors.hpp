#pragma once

#include <stdexcept>
#include <string>

namespace qtrk {

// Base class for all library errors so callers can catch qtrk failures as one family.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or out-of-range indices.
struct shape_error : error {
    using error::error;
};

// Parameter outside its mathematical domain (quantile levels, rate hypotheses, ...).
struct domain_error : error {
    using error::error;
};

// Malformed config file, unknown keys, unreadable inputs.
struct config_error : error {
    using error::error;
};

// Numerical validity violated at runtime (non-finite data, imaginary residue, singular rows).
struct numerical_error : error {
    using error::error;
};

} // namespace qtrk
