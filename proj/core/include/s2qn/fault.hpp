#ifndef S2QN_FAULT_HPP
#define S2QN_FAULT_HPP

#include <cstdlib>
#include <string>
#include <string_view>

namespace s2qn::fault {

// Test-only fault injection, armed through S2QN_FAULT. The variable is read
// once per process so a run cannot change behavior midway.
inline bool enabled(std::string_view name) {
  static const std::string armed = [] {
    const char* v = std::getenv("S2QN_FAULT");
    return std::string(v ? v : "");
  }();
  return armed == name;
}

}  // namespace s2qn::fault

#endif  // S2QN_FAULT_HPP
