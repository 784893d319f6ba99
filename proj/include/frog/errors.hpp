#pragma once

#include <stdexcept>
#include <string>

namespace frog {

// Configuration problems: unknown keys, invalid values. CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset and file problems: missing images, malformed manifests. CLI exit code 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failures: non-finite parameters or losses. CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace frog
