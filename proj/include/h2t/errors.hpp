#pragma once

#include <stdexcept>
#include <string>

namespace h2t {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents do not match what the operation requires.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// A precondition on user-supplied values failed.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

// Non-finite values where finiteness is promised (divergence, overflow).
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// A documented invariant was broken at runtime (e.g. frozen parameters moved).
struct InvariantViolation : Error {
    explicit InvariantViolation(const std::string& msg) : Error("invariant violation: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct BadMagicError : IoError {
    explicit BadMagicError(const std::string& msg) : IoError("bad magic: " + msg) {}
};

struct TruncatedFileError : IoError {
    explicit TruncatedFileError(const std::string& msg) : IoError("truncated file: " + msg) {}
};

struct ChecksumError : IoError {
    explicit ChecksumError(const std::string& msg) : IoError("checksum mismatch: " + msg) {}
};

// Config file problems; message names the offending section/key.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

} // namespace h2t
