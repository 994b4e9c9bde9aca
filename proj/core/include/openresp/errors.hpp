#pragma once

#include <stdexcept>
#include <string>

namespace openresp {

/// Malformed or inconsistent input data (bad corpus, misaligned predictions,
/// incomplete rating sessions).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration supplied by the caller.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Process exit codes shared by every CLI verb.
enum class ExitCode : int {
    success = 0,
    usage = 1,
    data_error = 2,
    provider_error = 3,
    partial = 4,
};

} // namespace openresp
