#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lodstream {

enum class ErrorCode {
  InvalidArgument,
  OutOfArena,
  SpillOverflow,
  BacklogOverflow,
  BadMagic,
  UnsupportedFormat,
  Truncated,
  IoError,
  EmptyFile,
  MalformedMessage,
  BindError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lodstream
