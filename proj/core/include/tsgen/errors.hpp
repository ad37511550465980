#pragma once

#include <stdexcept>
#include <string>

namespace tsgen {

/// Bad or inconsistent configuration (CLI exit code 3).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing or unreadable input file / directory / checkpoint (CLI exit code 4).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed data inside an otherwise readable input.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tsgen
