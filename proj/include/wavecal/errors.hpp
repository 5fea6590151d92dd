#pragma once

#include <stdexcept>
#include <string>

namespace wavecal {

// Base of every error raised by the library. The CLI maps these to a
// stage-tagged message and a nonzero exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class CoverageError : public Error {
public:
    using Error::Error;
};

class WindowError : public Error {
public:
    using Error::Error;
};

class DegenerateWarpError : public Error {
public:
    using Error::Error;
};

class ConditioningError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class InitError : public Error {
public:
    using Error::Error;
};

// Wraps a failure with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

} // namespace wavecal
