#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bss {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, IoError -> 3, NumericError -> 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class MalformedHeaderError : public IoError {
 public:
  explicit MalformedHeaderError(const std::string& what) : IoError(what) {}
};

class TruncatedPayloadError : public IoError {
 public:
  explicit TruncatedPayloadError(const std::string& what) : IoError(what) {}
};

class DtypeError : public IoError {
 public:
  explicit DtypeError(const std::string& what) : IoError(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

using index_t = std::int64_t;

}  // namespace bss
