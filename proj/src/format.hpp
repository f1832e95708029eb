#pragma once

#include <charconv>
#include <string>

namespace imbal::detail {

/// Shortest round-trip decimal form; locale independent.
inline std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace imbal::detail
