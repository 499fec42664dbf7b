#include <cstdio>
#include <cstdlib>
#include <string>

#include "degenflow/cli/validation.hpp"

using namespace degenflow::cli;

// Usage: degenflow_acceptance [fast|full] [seed]
int main(int argc, char** argv) {
  ValidationOptions opt;
  const std::string level = argc > 1 ? argv[1] : "full";
  opt.level = level == "fast" ? ValidationLevel::Fast : ValidationLevel::Full;
  if (argc > 2) opt.seed = std::strtoull(argv[2], nullptr, 10);
  opt.on_result = [](const CriterionResult& r) {
    std::printf("%s\n", format_result(r).c_str());
    std::fflush(stdout);
  };
  const auto report = validate_suite(opt);
  std::size_t passed = 0;
  for (const auto& c : report.criteria) passed += c.passed ? 1 : 0;
  std::printf("%zu/%zu criteria passed\n", passed, report.criteria.size());
  return report.all_passed() ? 0 : 1;
}
