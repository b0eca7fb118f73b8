#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsr {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidState : public Error {
public:
    using Error::Error;
};

/// Malformed input bytes; `offset` is the byte position where parsing stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::string path)
        : Error(what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class CorruptedDataset : public Error {
public:
    using Error::Error;
};

class InfeasiblePartition : public Error {
public:
    InfeasiblePartition(const std::string& what, std::string type_name)
        : Error(what), type_name_(std::move(type_name)) {}

    const std::string& type_name() const noexcept { return type_name_; }

private:
    std::string type_name_;
};

} // namespace fedsr
