#pragma once

#include <stdexcept>
#include <string>

namespace rlr {

// Base class for all library errors. The CLI maps the subclasses onto exit
// codes (InputError -> 2, everything numeric -> 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input (shapes, ranges, non-finite values).
class InputError : public Error {
public:
    using Error::Error;
};

// Data that is valid but cannot support the requested estimate, e.g. a
// weighted second-moment matrix of rank below r or constant scores.
class DegenerateError : public Error {
public:
    using Error::Error;
};

// Internal numerical failure (non-convergence, violated hard bound).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace rlr
