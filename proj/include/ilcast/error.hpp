#pragma once

#include <stdexcept>
#include <string>

namespace ilcast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a schema or invariant (bad row, duplicate key, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// A numerical routine produced a non-finite value or could not proceed.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what, long row = -1)
        : Error(row >= 0 ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}

    /// Offending row index, or -1 when not tied to a row.
    long row() const noexcept { return row_; }

private:
    long row_;
};

} // namespace ilcast
