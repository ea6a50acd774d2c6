// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace distar {

// Operand shapes do not conform to the documented rules.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf where a finite value is required, singular matrix, etc.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown key, missing section, invalid value).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Misuse of the tape (backward on a stale tape, double backward, ...).
struct tape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace distar
