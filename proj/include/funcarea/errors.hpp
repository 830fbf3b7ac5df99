#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace funcarea {

// Base of every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

// Box does not overlap the image it is applied to.
class InvalidRegion : public Error {
public:
    using Error::Error;
};

// Tensor or layer dimensions do not chain.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Forward cache does not belong to the network/parameters handed to backward.
class InvalidState : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

// Training set with fewer than two distinct labels.
class DegenerateData : public Error {
public:
    using Error::Error;
};

// Malformed file. `offset` is the byte (binary formats) or line (text formats)
// where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace funcarea
