#pragma once

#include <stdexcept>
#include <string>

namespace grex {

// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorCode {
  kInvalidArgument = 1,
  kConfig = 2,
  kIo = 3,
  kEmptyScope = 4,
  kNoContrastiveSignal = 5,
  kNumerical = 6,
  kDegenerateDistribution = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline int exit_code(ErrorCode code) { return static_cast<int>(code); }

}  // namespace grex
