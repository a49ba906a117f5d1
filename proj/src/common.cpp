#include <algorithm>
#include <cctype>
#include <string>

#include "oddmap/error.hpp"
#include "oddmap/types.hpp"

namespace oddmap {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Io: return "io";
    case ErrorKind::Network: return "network";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::EmptyTile: return "empty_tile";
    case ErrorKind::Join: return "join";
    case ErrorKind::Undefined: return "undefined";
    case ErrorKind::SampleSize: return "sample_size";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Backend: return "backend";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Contract:
    case ErrorKind::Backend: return 4;
    default: return 3;
  }
}

std::string_view to_string(Label label) noexcept {
  return label == Label::Waste ? "waste" : "background";
}

std::optional<Label> parse_label(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "waste") return Label::Waste;
  if (lower == "background") return Label::Background;
  return std::nullopt;
}

}  // namespace oddmap
