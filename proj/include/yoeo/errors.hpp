#pragma once

#include <stdexcept>
#include <string>

namespace yoeo {

/// Invalid configuration value, shape mismatch between components, bad CLI flag.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// An operation was called outside its precondition (empty dataset, tau outside (0,1), ...).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite loss or gradient during optimisation.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent file on disk.
class LoadError : public std::runtime_error {
public:
    explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace yoeo
