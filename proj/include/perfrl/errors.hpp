#pragma once

#include <stdexcept>
#include <string>

namespace perfrl {

/// A numeric argument outside the domain where a formula is defined
/// (log of zero, lambda = 0 where pi_min needs lambda > 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller violated an operation precondition (shape mismatch, probe too large, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An invariant the library itself maintains was broken.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid experiment configuration. `path` names the offending field, e.g. "env.gamma".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace perfrl
