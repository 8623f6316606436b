#pragma once

#include <stdexcept>
#include <string>

namespace olm {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// exit codes: ValidationError -> 1, TransportError -> 2, InternalError -> 3.

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a statistic is requested over an empty selection.
class NoDataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A broken internal invariant; always a bug, never user input.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace olm
