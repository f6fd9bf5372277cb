#pragma once

#include <cstdio>
#include <string>

namespace tvpgo::detail {

// Shortest round-trippable decimal form; every text writer uses this so
// identical values always serialize to identical bytes.
inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace tvpgo::detail
