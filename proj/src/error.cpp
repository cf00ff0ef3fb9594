#include "ovr/error.hpp"

namespace ovr {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::truncated: return "truncated";
    case Errc::unsupported_format: return "unsupported_format";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::schema: return "schema";
    case Errc::silent_signal: return "silent_signal";
    case Errc::too_short: return "too_short";
    case Errc::mismatch: return "mismatch";
    case Errc::numeric: return "numeric";
    case Errc::not_found: return "not_found";
    case Errc::conflict: return "conflict";
    case Errc::frozen: return "frozen";
    case Errc::rejected: return "rejected";
  }
  return "unknown";
}

}  // namespace ovr
