#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace semikan {

// Thrown when tensor shapes do not satisfy an operation's contract.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when a configuration value is out of its legal range.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when a caller violates an API precondition (e.g. non-scalar loss).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Thrown on malformed input files; carries the byte offset of the defect.
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t byte_offset)
        : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

// Thrown when a metric is undefined for the given inputs (e.g. empty mask).
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace semikan
