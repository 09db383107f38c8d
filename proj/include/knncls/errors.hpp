#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace knncls {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Retrieval was requested against an empty datastore or an empty hit list.
class RetrievalUnavailable : public Error {
public:
    using Error::Error;
};

enum class FormatErrorKind {
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    ChecksumMismatch,
    ShapeMismatch,
    Malformed,
};

const char* to_string(FormatErrorKind kind);

/// Raised by every file loader (datastore, model, dataset, config).
class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& message)
        : Error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

/// A dataset record could not be parsed; `line()` is 1-based.
class DataError : public Error {
public:
    DataError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Training produced a non-finite loss.
class TrainingDivergence : public Error {
public:
    using Error::Error;
};

}  // namespace knncls
