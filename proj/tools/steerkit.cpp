// steerkit <experiment> --config <file.json> [--seed N] [--out DIR]
// steerkit list

#include <cstdio>
#include <cstdlib>
#include <optional>

#include "CLI11.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/harness.hpp"

using namespace steerkit;

int main(int argc, char** argv) {
  CLI::App app{"steerkit: weight-space vs activation-space steering lab"};
  std::string experiment;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  app.add_option("experiment", experiment, "experiment name, or 'list'")->required();
  app.add_option("--config,-c", config_path, "JSON config file");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out, "output directory (STEERKIT_OUT takes precedence)");
  app.add_flag("--quiet,-q", quiet, "only print failures");
  CLI11_PARSE(app, argc, argv);

  if (experiment == "list") {
    for (const auto& e : experiment_registry()) {
      std::printf("%-22s %s\n", e.name.c_str(), e.summary.c_str());
    }
    return kExitOk;
  }

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
  } catch (const IoError& e) {
    std::fprintf(stderr, "steerkit: %s\n", e.what());
    return kExitIo;
  } catch (const ConfigurationError& e) {
    std::fprintf(stderr, "steerkit: %s\n", e.what());
    return kExitConfig;
  }
  if (!cfg.experiment.empty() && cfg.experiment != experiment) {
    std::fprintf(stderr, "steerkit: config is for '%s', not '%s'\n", cfg.experiment.c_str(),
                 experiment.c_str());
    return kExitConfig;
  }
  cfg.experiment = experiment;
  if (seed) cfg.seed = *seed;
  if (out) cfg.output_dir = *out;
  if (const char* env = std::getenv("STEERKIT_OUT"); env && *env) cfg.output_dir = env;

  const RunOutcome r = run_experiment(cfg);
  switch (r.exit_code) {
    case kExitOk:
    case kExitInvariant:
      if (!quiet || r.exit_code != kExitOk) {
        for (const auto& c : r.report->checks) {
          if (quiet && c.passed) continue;
          std::printf("%-4s %-32s %s\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.detail.c_str());
        }
      }
      if (!quiet) {
        for (const auto& f : r.files) std::printf("wrote %s\n", f.string().c_str());
      }
      if (r.exit_code == kExitInvariant) {
        std::fprintf(stderr, "steerkit: %s: failed check '%s'\n", experiment.c_str(),
                     r.failing_check.c_str());
      }
      break;
    default:
      std::fprintf(stderr, "steerkit: %s\n", r.message.c_str());
  }
  return r.exit_code;
}
