#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trico {

/// Precondition violated by caller-supplied values (shapes, ranges, non-finite input).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A finite-difference oracle produced a non-finite evaluation.
class OracleFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A windowed statistic was asked for with too few samples.
class InsufficientHistory : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed embedding / label / model file. Carries the file and byte offset.
class FormatError : public std::runtime_error {
public:
    FormatError(std::string file, std::size_t offset, const std::string& what)
        : std::runtime_error(file + " @" + std::to_string(offset) + ": " + what),
          file_(std::move(file)), offset_(offset) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::string file_;
    std::size_t offset_;
};

/// Bad configuration text or flag. line() is 0 for command-line overrides.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& what)
        : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace trico
