#pragma once

#include <stdexcept>
#include <string>

namespace stlcal {

// Error taxonomy shared across the toolkit. Each type maps to a CLI exit
// class: schema/trace errors are input problems (exit 2), the rest are
// data/model problems (exit 3).

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyTrace : std::runtime_error {
  explicit EmptyTrace(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
};

struct ParamError : std::runtime_error {
  explicit ParamError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::out_of_range {
  explicit IndexError(const std::string& msg) : std::out_of_range(msg) {}
};

struct DegenerateData : std::runtime_error {
  explicit DegenerateData(const std::string& msg) : std::runtime_error(msg) {}
};

struct OptError : std::runtime_error {
  explicit OptError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stlcal
