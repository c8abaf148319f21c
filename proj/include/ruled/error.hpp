#pragma once

#include <stdexcept>
#include <string>

namespace ruled {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Non-manifold or otherwise unsupported connectivity.
class TopologyError : public Error {
public:
    using Error::Error;
};

/// Zero-area faces, coincident points and similar degenerate geometry.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace ruled
