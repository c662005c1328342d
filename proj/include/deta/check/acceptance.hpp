#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace deta::check {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct CriterionSpec {
  int id;
  std::string name;
  std::function<CriterionResult()> run;
};

// Criteria 1-9 in order.
const std::vector<CriterionSpec>& acceptance_criteria();
// Runs all criteria (or only `only` when non-empty), printing one line each.
std::vector<CriterionResult> run_acceptance(std::ostream& out, const std::vector<int>& only = {});
std::string format_line(const CriterionResult& r);

}  // namespace deta::check
