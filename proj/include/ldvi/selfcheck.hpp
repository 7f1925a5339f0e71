#pragma once

// Fast oracle and invariant suite behind the `check` subcommand.

#include <string>
#include <vector>

namespace ldvi {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Measured quantity (an error, a count, or a margin) and its limit.
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
};

std::vector<CheckResult> run_selfcheck();

}  // namespace ldvi
