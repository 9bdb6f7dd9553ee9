#pragma once

#include <stdexcept>
#include <string>

namespace evkit {

// Base class of every failure thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between tensors.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid user-supplied configuration (cluster counts, fractions, windows).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input text or bytes; message carries line/offset context.
struct ParseError : Error {
    using Error::Error;
};

// A value outside its admissible set (e.g. polarity not in {-1,+1}).
struct DomainError : Error {
    using Error::Error;
};

// Coordinate outside the sensor array.
struct BoundsError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// A softmax row with no finite entry.
struct DegenerateRowError : NumericError {
    using NumericError::NumericError;
};

// Normalization statistics outside their domain (negative variance).
struct StatisticsError : Error {
    using Error::Error;
};

// Kernel geometry this library does not support (even extents).
struct KernelSizeError : Error {
    using Error::Error;
};

// Filesystem failures, message carries the path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace evkit
