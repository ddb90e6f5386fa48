#include "lodstream/error.hpp"

namespace lodstream {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfArena: return "OutOfArena";
    case ErrorCode::SpillOverflow: return "SpillOverflow";
    case ErrorCode::BacklogOverflow: return "BacklogOverflow";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::MalformedMessage: return "MalformedMessage";
    case ErrorCode::BindError: return "BindError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace lodstream
