#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "degenflow/cli/config.hpp"
#include "degenflow/cli/experiment.hpp"
#include "degenflow/cli/validation.hpp"

namespace fs = std::filesystem;
using namespace degenflow;
using namespace degenflow::cli;

namespace {

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

int run_kind(ExperimentKind kind, const RunArgs& args) {
  std::vector<ExperimentPlan> plans;
  try {
    plans = load_config(args.config);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid config '" << args.config << "'\n";
    for (const auto& is : e.issues()) {
      std::cerr << "  " << to_string(is.code);
      if (is.line > 0) std::cerr << " line " << is.line;
      if (!is.key.empty()) std::cerr << " [" << is.key << "]";
      std::cerr << ": " << is.message << "\n";
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::erase_if(plans, [kind](const ExperimentPlan& p) { return p.kind != kind; });
  if (plans.empty()) {
    std::cerr << "error: config has no '" << to_string(kind) << "' experiment\n";
    return 1;
  }

  std::string out = args.out;
  if (out.empty()) {
    if (const char* env = std::getenv("DEGENFLOW_OUT"); env && *env) out = env;
  }
  int code = 0;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& plan = plans[i];
    RunSettings rs;
    rs.threads = args.threads;
    rs.seed = args.seed;
    std::string dir = out.empty() ? plan.out_dir : out;
    if (plans.size() > 1) {
      dir = (fs::path(dir) / (plan.name.empty() ? "experiment" + std::to_string(i + 1) : plan.name)).string();
    }
    rs.out_dir = dir;
    const auto res = run_experiment(plan, rs);
    std::printf("%s%s%s: exit %d, %llu paths, output in %s\n", to_string(plan.kind), plan.name.empty() ? "" : ".",
                plan.name.c_str(), res.exit_code, static_cast<unsigned long long>(res.total_paths),
                res.out_dir.c_str());
    if (!res.error.empty()) std::fprintf(stderr, "error: %s\n", res.error.c_str());
    if (res.exit_code == 1 || (res.exit_code == 2 && code == 0)) code = res.exit_code;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation of diffusions with degenerate boundary layers"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  const ExperimentKind kinds[] = {ExperimentKind::Spectral,   ExperimentKind::ExitProb,   ExperimentKind::ExitTime,
                                  ExperimentKind::HitMeasure, ExperimentKind::Transition, ExperimentKind::Metastable,
                                  ExperimentKind::Mu,         ExperimentKind::Homogenize};
  RunArgs args;
  std::optional<ExperimentKind> chosen;
  for (auto kind : kinds) {
    auto* sub = app.add_subcommand(to_string(kind), std::string("run a ") + to_string(kind) + " experiment");
    sub->add_option("--config", args.config, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", args.seed, "master seed (overrides the config)");
    sub->add_option("--out", args.out, "output directory (overrides DEGENFLOW_OUT and the config)");
    sub->add_option("--threads", args.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  std::string level = "fast";
  ValidationOptions vopt;
  std::vector<int> only;
  auto* validate = app.add_subcommand("validate", "run the acceptance criteria");
  validate->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  validate->add_option("--seed", vopt.seed, "master seed");
  validate->add_option("--threads", vopt.threads, "worker threads")->check(CLI::PositiveNumber);
  validate->add_option("--criteria", only, "run only these criterion ids")->delimiter(',')->check(CLI::Range(1, 10));
  validate->add_flag("--inject-beta-sign-error", vopt.inject_beta_sign_error, "test hook")->group("");

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    vopt.level = level == "full" ? ValidationLevel::Full : ValidationLevel::Fast;
    vopt.only = only;
    vopt.on_result = [](const CriterionResult& r) {
      std::printf("%s\n", format_result(r).c_str());
      std::fflush(stdout);
    };
    const auto report = validate_suite(vopt);
    std::size_t passed = 0;
    for (const auto& c : report.criteria) passed += c.passed ? 1 : 0;
    std::printf("%zu/%zu criteria passed\n", passed, report.criteria.size());
    return report.all_passed() ? 0 : 1;
  }
  return chosen ? run_kind(*chosen, args) : 1;
}
