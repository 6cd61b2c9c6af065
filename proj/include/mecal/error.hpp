#ifndef MECAL_ERROR_HPP
#define MECAL_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mecal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input row. Carries the 1-based line number of the offending row.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// A token that is not one of the allowed enumerated values.
class EnumValueError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Repeated (gene, platform, replicate) key.
class DuplicateError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Value outside the domain of an operation (log of a non-positive number,
/// non-positive variance, p-value outside [0, 1], ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Gene set membership violates A ⊂ B ⊂ C.
class NestingError : public Error {
public:
    using Error::Error;
};

/// Too few genes to compute the requested moments.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A covariance used as a denominator vanished.
class DegenerateCovarianceError : public Error {
public:
    using Error::Error;
};

/// A negative variance component sits on a calibration path that needs it.
class CalibrationBlockedError : public Error {
public:
    using Error::Error;
};

/// Too many bootstrap or simulation replicates were discarded.
class InstabilityError : public Error {
public:
    using Error::Error;
};

/// Invalid simulation or command configuration. `field` is a dotted path.
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error(field + ": " + what), field_(field) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

} // namespace mecal

#endif
