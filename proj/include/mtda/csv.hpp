#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <type_traits>

namespace mtda::csv {

// Fixed-precision rendering so CSV artifacts are byte-stable.
inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline void row(std::ostream&) {}

template <typename T, typename... Rest>
void row(std::ostream& out, const T& first, const Rest&... rest) {
  if constexpr (std::is_floating_point_v<T>) {
    out << num(first);
  } else {
    out << first;
  }
  if constexpr (sizeof...(rest) > 0) {
    out << ',';
    row(out, rest...);
  } else {
    out << '\n';
  }
}

}  // namespace mtda::csv
