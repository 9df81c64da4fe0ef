#pragma once

#include <stdexcept>
#include <string>

namespace contam {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (bad JSON, schema violation, duplicate id).
// Carries the 1-based line number when known (0 otherwise).
struct ParseError : Error {
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_number(line) {}
    std::size_t line_number;
};

// A record lacks the data a detector or span needs.
struct MissingDataError : Error {
    using Error::Error;
};

// Empty span / empty list where a non-empty one is required.
struct EmptySpanError : Error {
    using Error::Error;
};

// Simulator configuration or feasibility problem (cap exceeded,
// unsupported mode, empty conditioning set).
struct SimError : Error {
    using Error::Error;
};

}  // namespace contam
