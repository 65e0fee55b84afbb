#pragma once

#include <stdexcept>
#include <string>

namespace nmtlab {

// Error taxonomy. The CLI maps usage problems to exit 2 and everything
// below to exit 1; library code never calls exit().

// Operand shapes are incompatible (matmul inner dims, concat extents, ...).
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller broke an API contract (non-scalar loss, missing gradient, ...).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input data is unusable (empty corpus, malformed alignment file, ...).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration value or key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A token or name was not found where it must exist.
struct LookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace nmtlab
