#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uqseg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on an argument (bad dimensions, out-of-range value).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& path, std::size_t offset, const std::string& what)
        : Error(path + ": byte " + std::to_string(offset) + ": " + what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A predictor (built-in or external process) failed to produce a map.
class PredictorError : public Error {
public:
    using Error::Error;
};

/// Mask has no foreground component to measure.
class NoForegroundError : public Error {
public:
    using Error::Error;
};

/// Ellipse fit failed: too few points, degenerate scatter, or a non-ellipse conic.
class FitError : public Error {
public:
    using Error::Error;
};

}  // namespace uqseg
