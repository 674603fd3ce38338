#pragma once

// Invariant checks run by `robagg check`. Each check is self-contained and
// deterministic (fixed seeds).

#include <string>
#include <vector>

namespace robagg {

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

std::vector<CheckResult> run_self_checks();

}  // namespace robagg
