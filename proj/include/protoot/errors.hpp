#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace protoot {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A row with (near-)zero Euclidean norm where a unit row is required.
struct ZeroRowError : Error {
    using Error::Error;
};

// Operand dimensions do not agree.
struct DimMismatchError : Error {
    using Error::Error;
};

// exp(s/epsilon) overflowed; rerun with log-domain stabilization.
struct NonFiniteKernelError : Error {
    using Error::Error;
};

// Instance exceeds the exact solver's enumeration bound.
struct TooLargeError : Error {
    using Error::Error;
};

struct TooFewPointsError : Error {
    using Error::Error;
};

struct EmptyInputError : Error {
    using Error::Error;
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct IndexOutOfRangeError : Error {
    using Error::Error;
};

struct BankTooSmallError : Error {
    using Error::Error;
};

struct NonPositiveTauError : Error {
    using Error::Error;
};

struct BatchTooSmallError : Error {
    using Error::Error;
};

struct KMismatchError : Error {
    using Error::Error;
};

struct KTooLargeError : Error {
    using Error::Error;
};

struct RejectionExhaustedError : Error {
    using Error::Error;
};

// A tolerance-mode solve exhausted max_iter where certified marginals were
// required. Solvers themselves report this through TransportPlan::converged;
// callers that need certification raise it.
struct NoConvergenceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Malformed text input; carries 1-based line and column of the offence.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line_no, std::size_t column_no)
        : Error(what + " (line " + std::to_string(line_no) + ", column " +
                std::to_string(column_no) + ")"),
          line(line_no),
          column(column_no) {}

    std::size_t line;
    std::size_t column;
};

}  // namespace protoot
