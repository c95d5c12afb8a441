#pragma once

#include <stdexcept>
#include <string>

namespace vlf {

// Exit-code contract used by the CLI:
//   0 success, 2 bad configuration/input, 3 infeasible design point,
//   4 numeric invariant violated at runtime.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vlf
