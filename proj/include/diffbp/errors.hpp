#pragma once

#include <stdexcept>
#include <string>

namespace diffbp {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement (dimensions named in the message).
struct ShapeError : Error {
    using Error::Error;
};

// Parameter or config value outside its documented range.
struct ValidationError : Error {
    using Error::Error;
};

// API misuse: a documented precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Metric input with zero variance (Pearson correlation is undefined there).
struct DegenerateInputError : Error {
    using Error::Error;
};

// File-level failure (missing file, unreadable, short write).
struct IoError : Error {
    using Error::Error;
};

// Text input that does not match its format; carries a 1-based line number
// when one is known (0 otherwise).
struct ParseError : IoError {
    ParseError(const std::string& msg, std::size_t line = 0)
        : IoError(line ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    std::size_t line_number;
};

// Binary container errors, one kind per failure mode.
struct CheckpointError : IoError {
    enum class Kind { bad_magic, bad_version, truncated, bad_dtype, malformed };

    CheckpointError(Kind k, const std::string& msg) : IoError(msg), kind(k) {}
    Kind kind;
};

}  // namespace diffbp
