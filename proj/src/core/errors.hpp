#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cpinn {

enum class ErrorCode {
  invalid_argument = 1,
  dimension_mismatch = 2,
  parse_error = 3,
  io_error = 4,
  numeric_error = 5,
  divergence = 6,
};

// All recoverable failures in the core surface as one exception type carrying
// a stable code. The C API maps the code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace cpinn
