#pragma once

#include <stdexcept>
#include <string>

namespace fdsim {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/layout mismatch (names the offending layer where applicable).
struct DimensionError : Error {
    using Error::Error;
};

// Invalid or inconsistent experiment configuration. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Protocol misuse (too few devices, missing reports, ...).
struct ProtocolError : Error {
    using Error::Error;
};

// Training produced non-finite weights. Carries where it happened. CLI exit code 3.
struct DivergenceError : Error {
    int device_id;
    long step;
    DivergenceError(int device, long at_step, const std::string& what)
        : Error(what), device_id(device), step(at_step) {}
};

} // namespace fdsim
