#pragma once

#include <stdexcept>
#include <string>

namespace collabevo {

/// Base for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed values that violate a documented precondition.
class InvalidArgument : public Error
{
public:
    using Error::Error;
};

/// Configuration document or field rejected. `field()` names the offender.
class ConfigError : public Error
{
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field))
    {
    }

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Generator or scorer model could not be loaded or produced an incompatible tensor.
class BackendError : public Error
{
public:
    using Error::Error;
};

/// Well-formed input whose content is unusable (e.g. non-normalized score distribution).
class DataError : public Error
{
public:
    using Error::Error;
};

/// Malformed or unsupported persisted document.
class FormatError : public Error
{
public:
    using Error::Error;
};

} // namespace collabevo
