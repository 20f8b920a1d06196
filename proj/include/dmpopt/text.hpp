#pragma once

#include <charconv>
#include <string>

namespace dmpopt {

// Shortest decimal that round-trips to the same double.
inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace dmpopt
