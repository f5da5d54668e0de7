#pragma once

#include <stdexcept>
#include <string>

namespace cimsim {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CalibrationError : std::runtime_error {
    explicit CalibrationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct QuantizeError : std::runtime_error {
    explicit QuantizeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MappingError : std::runtime_error {
    explicit MappingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TraceError : std::runtime_error {
    explicit TraceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AccumError : std::runtime_error {
    explicit AccumError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RmseUndefined : std::runtime_error {
    explicit RmseUndefined(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cimsim
