#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace peee {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input problems: malformed files, schema violations, bad configuration.

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}
    /// Line number (files) or character offset (formulas).
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class MissingDataError : public Error {
public:
    MissingDataError(const std::string& what, std::size_t row, std::string column)
        : Error(what), row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Numerical failures.

class NumericError : public Error {
public:
    using Error::Error;
};

class SingularDesignError : public NumericError {
public:
    using NumericError::NumericError;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, std::vector<double> last_iterate = {})
        : NumericError(what), last_iterate_(std::move(last_iterate)) {}
    const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

private:
    std::vector<double> last_iterate_;
};

class DegenerateLevelError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Raised when an object is asked for state it does not carry.
class StateError : public Error {
public:
    using Error::Error;
};

}  // namespace peee
