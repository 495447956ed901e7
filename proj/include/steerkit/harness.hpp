#pragma once

// Experiment configuration, registry and dispatch.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "steerkit/report.hpp"

namespace steerkit {

struct Dims {
  std::size_t d_model = 8;
  std::size_t d_mlp = 16;
  std::size_t positions = 1;
  std::size_t samples = 64;
};

struct ExperimentConfig {
  std::string experiment;
  Dims dims;
  std::uint64_t seed = 0;
  std::map<std::string, double> tolerances;
  std::filesystem::path output_dir = "steerkit-out";
  // Experiment-specific knobs (trial counts, learning rates, grids).
  Json options = Json::object();

  double tolerance(const std::string& name, double fallback) const;
  Json echo() const;
};

// Parses and validates; throws ConfigurationError.
ExperimentConfig config_from_json(const Json& j);
// Throws IoError if unreadable, ConfigurationError if malformed.
ExperimentConfig load_config(const std::filesystem::path& path);
void validate_config(const ExperimentConfig& cfg);

using ExperimentFn = std::function<Report(const ExperimentConfig&)>;

struct ExperimentInfo {
  std::string name;
  std::string summary;
  ExperimentFn run;
};

const std::vector<ExperimentInfo>& experiment_registry();
const ExperimentInfo* find_experiment(const std::string& name);

enum ExitCode : int {
  kExitOk = 0,
  kExitInvariant = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitInternal = 4,
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::string failing_check;  // first failing invariant, if any
  std::string message;        // error text for codes 2-4
  std::optional<Report> report;
  std::vector<std::filesystem::path> files;
};

// Runs the configured experiment and writes its report into cfg.output_dir.
RunOutcome run_experiment(const ExperimentConfig& cfg);

}  // namespace steerkit
