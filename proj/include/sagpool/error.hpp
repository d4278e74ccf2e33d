#pragma once

#include <stdexcept>
#include <string>

namespace sagpool {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// A caller violated an operation contract (bad index list, empty segment,
/// out-of-range label, degenerate parameter, ...).
class ValueError : public Error {
public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

/// Malformed input file; carries file name and 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& file, long line, const std::string& msg)
        : Error(file + ":" + std::to_string(line) + ": " + msg),
          file_(file), line_(line) {}

    const std::string& file() const { return file_; }
    long line() const { return line_; }

private:
    std::string file_;
    long line_;
};

/// Non-finite value encountered during numeric work (training aborts with this).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace sagpool
