#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oddmap {

enum class ErrorKind {
  Config,     // bad parameters or configuration
  Parse,      // malformed input document
  Validation, // well-formed input violating a data rule
  Conflict,   // contradictory records
  Io,
  Network,    // retriable transport failure
  NotFound,
  Integrity,  // checksum / size mismatch
  Geometry,
  EmptyTile,
  Join,       // misaligned identifiers between two inputs
  Undefined,  // metric or statistic undefined for the input
  SampleSize,
  Contract,   // model file does not satisfy the backend contract
  Backend,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for a failure of the given kind: 2 config, 3 data, 4 backend.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool retriable() const noexcept { return kind_ == ErrorKind::Network; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace oddmap
