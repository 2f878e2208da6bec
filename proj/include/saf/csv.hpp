#pragma once

#include <cstdio>
#include <string>

namespace saf {

// Six significant digits, '.' decimal separator regardless of locale.
inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace saf
