#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace weylglue {

struct VerifyCheck {
  std::string name;
  std::string anchor;  // lemma/equation label the check certifies
  bool passed = false;
  double value = 0;
  double tolerance = 0;
  std::string detail;
};

struct VerifyReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::vector<VerifyCheck> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

using ToleranceOverrides = std::map<std::string, double>;

// suite: tensor | series | boundary | balance | all
VerifyReport run_verify_suite(const std::string& suite, std::uint64_t seed,
                              const ToleranceOverrides& tol = {});

std::vector<std::string> verify_suite_names();

}  // namespace weylglue
