#include <fstream>
#include <set>

#include "steerkit/errors.hpp"
#include "steerkit/harness.hpp"
#include "steerkit/nanomodel.hpp"

namespace steerkit {
namespace {

std::size_t read_size(const Json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigurationError(std::string("dims.") + key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

double ExperimentConfig::tolerance(const std::string& name, double fallback) const {
  const auto it = tolerances.find(name);
  return it == tolerances.end() ? fallback : it->second;
}

Json ExperimentConfig::echo() const {
  Json j;
  j["experiment"] = experiment;
  j["dims"] = {{"d_model", dims.d_model},
               {"d_mlp", dims.d_mlp},
               {"positions", dims.positions},
               {"samples", dims.samples}};
  j["seed"] = seed;
  Json tol = Json::object();
  for (const auto& [k, v] : tolerances) tol[k] = v;
  j["tolerances"] = tol;
  j["options"] = options;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigurationError("config: top level must be an object");
  static const std::set<std::string> known = {"experiment", "dims",       "seed",
                                              "tolerances", "output_dir", "options"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigurationError("config: unknown key '" + k + "'");
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("experiment")) cfg.experiment = j.at("experiment").get<std::string>();
    if (j.contains("dims")) {
      const Json& d = j.at("dims");
      if (!d.is_object()) throw ConfigurationError("config: dims must be an object");
      for (const auto& [k, v] : d.items()) {
        if (k != "d_model" && k != "d_mlp" && k != "positions" && k != "samples") {
          throw ConfigurationError("config: unknown dims key '" + k + "'");
        }
      }
      cfg.dims.d_model = read_size(d, "d_model", cfg.dims.d_model);
      cfg.dims.d_mlp = read_size(d, "d_mlp", cfg.dims.d_mlp);
      cfg.dims.positions = read_size(d, "positions", cfg.dims.positions);
      cfg.dims.samples = read_size(d, "samples", cfg.dims.samples);
    }
    if (j.contains("seed")) {
      const Json& s = j.at("seed");
      if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                     s.get<long long>() < 0)) {
        throw ConfigurationError("config: seed must be a non-negative integer");
      }
      cfg.seed = s.get<std::uint64_t>();
    }
    if (j.contains("tolerances")) {
      const Json& t = j.at("tolerances");
      if (!t.is_object()) throw ConfigurationError("config: tolerances must be an object");
      for (const auto& [k, v] : t.items()) {
        if (!v.is_number()) throw ConfigurationError("config: tolerance '" + k + "' must be a number");
        cfg.tolerances[k] = v.get<double>();
      }
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("options")) {
      if (!j.at("options").is_object()) throw ConfigurationError("config: options must be an object");
      cfg.options = j.at("options");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.experiment.empty()) throw ConfigurationError("config: experiment is required");
  if (!find_experiment(cfg.experiment)) {
    throw ConfigurationError("unknown experiment '" + cfg.experiment + "'");
  }
  const Dims& d = cfg.dims;
  if (d.d_model < 2 || d.d_model > kMaxDModel) {
    throw ConfigurationError("config: d_model must lie in [2, " + std::to_string(kMaxDModel) + "]");
  }
  if (d.d_mlp < 2 || d.d_mlp > kMaxDMlp) {
    throw ConfigurationError("config: d_mlp must lie in [2, " + std::to_string(kMaxDMlp) + "]");
  }
  if (d.positions < 1) throw ConfigurationError("config: positions must be >= 1");
  if (d.samples < 1) throw ConfigurationError("config: samples must be >= 1");
  for (const auto& [k, v] : cfg.tolerances) {
    if (!(v >= 0.0)) throw ConfigurationError("config: tolerance '" + k + "' must be >= 0");
  }
  if (cfg.output_dir.empty()) throw ConfigurationError("config: output_dir is empty");
}

}  // namespace steerkit
