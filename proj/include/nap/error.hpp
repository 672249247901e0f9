#pragma once

#include <stdexcept>
#include <string>

namespace nap {

/// Raised on invalid data or violated preconditions.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised on bad command-line or configuration usage (CLI exit code 2).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what) {}
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw Error(message);
}

}  // namespace nap
