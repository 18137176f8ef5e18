#pragma once

#include <stdexcept>
#include <string>

namespace pertfool {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller handed us data that violates a precondition (shape mismatch,
/// label out of range, empty sample set, ...).
struct InputError : Error {
    using Error::Error;
};

/// A configuration value is missing, unknown or inconsistent.
struct ConfigError : Error {
    using Error::Error;
};

/// Training diverged; carries the iteration at which loss became non-finite.
struct TrainingError : Error {
    TrainingError(const std::string& msg, long long iteration)
        : Error(msg + " (iteration " + std::to_string(iteration) + ")"), iteration(iteration) {}
    long long iteration;
};

/// Numerical routine failed (e.g. Cholesky on a non-PSD matrix).
struct NumericError : Error {
    using Error::Error;
};

/// Binary/text format violations. `kind` distinguishes the failure modes
/// so tests and tools can react to each one specifically.
struct FormatError : Error {
    enum class Kind {
        bad_magic,
        bad_version,
        malformed_header,
        count_mismatch,
        truncated,
    };

    FormatError(Kind kind, const std::string& msg) : Error(msg), kind(kind) {}
    Kind kind;
};

}  // namespace pertfool
