#pragma once

#include <stdexcept>
#include <string>

namespace decdec {

// Base of every error thrown by the library. The CLI maps each subclass to a
// distinct exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (bad dimensions, out-of-range k,
// unsupported bitwidth, non-finite data).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// A file could not be read, written or parsed.
class FormatError : public Error {
public:
    using Error::Error;
};

// An internal consistency check failed. Indicates a bug, not bad input.
class InvariantError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw PreconditionError(message);
    }
}

} // namespace decdec
