#pragma once

#include <stdexcept>
#include <string>

namespace guardian {

// Raised when an input artifact is missing or does not belong to the run.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value; `field` names the offending key.
struct ConfigError : std::invalid_argument {
    ConfigError(std::string field_name, const std::string& message)
        : std::invalid_argument(field_name + ": " + message), field(std::move(field_name)) {}

    std::string field;
};

}  // namespace guardian
