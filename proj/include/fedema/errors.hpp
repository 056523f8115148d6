#pragma once

#include <stdexcept>
#include <string>

namespace fedema {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shapes or component wiring that cannot work together.
struct ConfigError : Error {
    using Error::Error;
};

// A numeric argument outside its documented range.
struct ParameterError : Error {
    using Error::Error;
};

// Malformed input data (non-finite values, mismatched lengths, bad files).
struct InputError : Error {
    using Error::Error;
};

// A protocol precondition was violated; the caller usually skips the round.
struct ProtocolError : Error {
    using Error::Error;
};

// Robust aggregation produced a degenerate (zero-mass) target.
struct AggregationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace fedema

#include <vector>

namespace fedema {

/// Every violated constraint of a configuration, reported together.
struct ValidationError : Error {
    explicit ValidationError(std::vector<std::string> problems)
        : Error(join(problems)), problems(std::move(problems)) {}

    std::vector<std::string> problems;

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out = "invalid configuration:";
        for (const auto& s : items) out += "\n  - " + s;
        return out;
    }
};

}  // namespace fedema
