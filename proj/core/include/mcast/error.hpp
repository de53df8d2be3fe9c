#pragma once

#include <stdexcept>
#include <string>

namespace mcast {

// Raised when a caller breaks an operation's precondition. These are
// programming errors, not runtime conditions to recover from.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

inline void expects(bool condition, const char* what) {
  if (!condition) throw ContractViolation(what);
}

}  // namespace mcast
