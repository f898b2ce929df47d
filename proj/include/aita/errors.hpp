#pragma once

#include <stdexcept>
#include <string>

namespace aita {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's documented precondition. Nothing was done.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Bad or inconsistent configuration (missing placeholder, HTTP 4xx from a backend, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Transient failure; the same call may succeed if repeated.
class RetriableError : public Error {
public:
    using Error::Error;
};

/// The model backend refused the content. Never retried.
class FilteredError : public Error {
public:
    explicit FilteredError(std::string reason)
        : Error("content filtered: " + reason), reason_(std::move(reason)) {}

    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

/// Stored or logged data contradicts itself.
class DataIntegrityError : public Error {
public:
    using Error::Error;
};

/// A ratio or statistic whose denominator is zero.
class UndefinedValueError : public Error {
public:
    using Error::Error;
};

/// Input that could not be parsed (corpus files, snapshots, CSV, JSON lines).
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace aita
