#pragma once

#include <stdexcept>
#include <string>

namespace otdrmtl {

// Error categories map onto CLI exit codes: config 2, data 3, numeric 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration, spec, or argument values.
struct config_error : error {
    using error::error;
};

// Bad or corrupted data: files, schema versions, label domains.
struct data_error : error {
    using error::error;
};

// Non-finite values, failed estimations, aborted numeric procedures.
struct numeric_error : error {
    using error::error;
};

// Tensor/layer shape disagreement; message names both shapes.
struct shape_error : error {
    using error::error;
};

// Request exceeds a hard budget (e.g. trace sample count).
struct resource_error : error {
    using error::error;
};

}  // namespace otdrmtl
