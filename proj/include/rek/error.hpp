#pragma once

#include <stdexcept>
#include <string>

namespace rek {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant (bad box corners, duplicate ids, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Degenerate geometry (zero-length paths, coincident antennas, ...).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Undefined numeric result (zero variance, NaN loss, ...).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace rek
