#pragma once

#include <stdexcept>
#include <string>

namespace shrinktea {

// Exit codes used by the command-line tool.
enum class ErrorCategory : int {
  internal = 1,
  config = 2,
  io = 3,
  numeric = 4,
  check = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, "config error: " + what) {}
};

// Shape disagreement between tensors; treated as a configuration problem at the CLI level.
struct DimensionError : Error {
  explicit DimensionError(const std::string& what)
      : Error(ErrorCategory::config, "dimension error: " + what) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& what) : Error(ErrorCategory::config, "index error: " + what) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& what)
      : Error(ErrorCategory::internal, "contract error: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, "I/O error: " + what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, "numeric error: " + what) {}
};

struct CheckFailure : Error {
  explicit CheckFailure(const std::string& what) : Error(ErrorCategory::check, "check failed: " + what) {}
};

}  // namespace shrinktea
