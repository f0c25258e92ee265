#pragma once

#include <stdexcept>
#include <string>

namespace qgen {

// Malformed input file contents (bad JSON, bad record shape).
class ParseError : public std::runtime_error {
  public:
    explicit ParseError(const std::string &msg) : std::runtime_error(msg) {}
};

// Violated precondition on otherwise well-formed data.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string &msg) : std::runtime_error(msg) {}
};

// Bad flag/config-key combination.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace qgen
