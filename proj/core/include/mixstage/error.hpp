#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace mixstage {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or array dimensions disagree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An index (speaker id, joint id) is outside its valid range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Input violates a documented precondition (non-simplex weights, bad config...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DegeneratePoseError : public Error {
public:
    using Error::Error;
};

class EmptyAudioError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class ArchMismatchError : public Error {
public:
    using Error::Error;
};

/// Raised by the trainer when a loss term becomes NaN or infinite.
class NonFiniteLossError : public Error {
public:
    using Error::Error;
};

/// A file is missing, truncated or does not follow its binary layout.
class FormatError : public Error {
public:
    FormatError(std::string path, std::uint64_t offset, const std::string& what)
        : Error(path + " @" + std::to_string(offset) + ": " + what),
          path_(std::move(path)),
          offset_(offset) {}

    const std::string& path() const noexcept { return path_; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::string path_;
    std::uint64_t offset_;
};

}  // namespace mixstage
