#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace astream {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised by tensor ops when operand shapes do not fit the op.
// The message always names the op and the offending shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (CLI, config files, model builds).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed on-disk data. Carries the byte offset where parsing stopped.
struct DataError : Error {
    DataError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
    explicit DataError(const std::string& msg) : Error(msg), byte_offset(0) {}
    std::size_t byte_offset;
};

// Training aborted (NaN loss or NaN gradient).
struct TrainError : Error {
    using Error::Error;
};

}  // namespace astream
