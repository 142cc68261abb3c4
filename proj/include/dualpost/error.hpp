#pragma once

#include <stdexcept>
#include <string>

namespace dualpost {

// Base for all toolkit errors. CLI maps each subclass to a stable category
// string so scripts can branch on stderr.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed record in an input file; message carries line number and field.
struct SchemaError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Violated precondition on an in-memory call (length mismatch, bad domain...).
struct InvalidArgument : Error {
    using Error::Error;
};

// Remote backend failures (transport, malformed response after retries).
struct BackendError : Error {
    using Error::Error;
};

}  // namespace dualpost
