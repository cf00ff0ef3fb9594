#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ovr {

enum class Errc {
  invalid_argument,
  io,
  format,
  truncated,
  unsupported_format,
  version_mismatch,
  schema,
  silent_signal,
  too_short,
  mismatch,
  numeric,
  not_found,
  conflict,
  frozen,
  rejected,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure surfaced by the library carries one of the codes above so
// callers (CLI exit codes, HTTP status mapping) can dispatch without parsing
// the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace ovr
