#pragma once

#include <stdexcept>
#include <string>

namespace plast {

// Every failure raised by the library derives from Error; kind() is the
// stable machine-readable tag the CLI reports.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string & message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string & kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string & m) : Error("shape_error", m) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string & m) : Error("numeric_error", m) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string & m) : Error("format_error", m) {}
};

struct IoError : Error {
    explicit IoError(const std::string & m) : Error("io_error", m) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string & m) : Error("config_error", m) {}
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string & m) : Error("invalid_argument", m) {}
};

struct UndefinedOverlap : Error {
    explicit UndefinedOverlap(const std::string & m) : Error("undefined_overlap", m) {}
};

struct EmptySelection : Error {
    explicit EmptySelection(const std::string & m) : Error("empty_selection", m) {}
};

// Raised when an invariant the library itself maintains is broken
// (e.g. a frozen parameter changed during training).
struct InternalError : Error {
    explicit InternalError(const std::string & m) : Error("internal_error", m) {}
};

} // namespace plast
