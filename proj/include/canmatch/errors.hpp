#pragma once

#include <stdexcept>
#include <string>

namespace canmatch {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible matrix/map shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-range row or map index.
class IndexError : public Error {
public:
    using Error::Error;
};

// Malformed file content; carries a line number when one is known.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Invalid or inconsistent data: bad sizes, disconnected graphs, degenerate samples,
// version mismatches.
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical failure: singular solve, non-finite values.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Bad configuration or usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

}  // namespace canmatch
