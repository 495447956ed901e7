#pragma once

// Report records and their on-disk form: one JSON document (full report,
// schema-tagged) plus one CSV per table.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "steerkit/adapters.hpp"
#include "steerkit/bounds.hpp"
#include "steerkit/firstorder.hpp"
#include "steerkit/nanomodel.hpp"
#include "steerkit/numkit.hpp"
#include "steerkit/subspace.hpp"
#include "steerkit/trainer.hpp"

namespace steerkit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "steerkit-report/1";

struct CsvTable {
  std::vector<std::string> header;
  std::vector<Vector> rows;

  void add_row(Vector row);
};

// 17 significant digits, comma separated, header first, '\n' line ends.
std::string format_csv(const CsvTable& t);
std::string format_double(double x);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::string experiment;
  std::uint64_t seed = 0;
  Json config = Json::object();
  Json body = Json::object();
  std::map<std::string, CsvTable> tables;
  std::vector<Check> checks;

  void check(const std::string& name, bool passed, const std::string& detail = "");
  bool passed() const;
  // First failing check, or empty.
  std::string first_failure() const;
  Json to_json() const;
};

// Writes report.json and <table>.csv into dir (created if missing). Returns
// the written paths in a fixed order. Throws IoError.
std::vector<std::filesystem::path> emit_report(const Report& r, const std::filesystem::path& dir);

// ---- JSON conversion of library records ----

Json to_json(const Vector& v);
Json to_json(const Matrix& m);  // array of rows
Vector vector_from_json(const Json& j);
Matrix matrix_from_json(const Json& j);

Json to_json(const GluParams& p);
GluParams glu_from_json(const Json& j);
Json to_json(const AttnParams& p);
AttnParams attn_from_json(const Json& j);
Json to_json(const SteeringAdapter& a);
SteeringAdapter steering_from_json(const Json& j);
Json to_json(const WeightUpdate& w);
WeightUpdate weight_update_from_json(const Json& j);

Json to_json(const FirstOrderReport& r);
Json to_json(const PrincipalAngleReport& r);
Json to_json(const CollapseReport& r);
Json to_json(const BoundCheckReport& r);
Json to_json(const TrainResult& r);

// Reads a whole file; throws IoError.
std::string read_file(const std::filesystem::path& p);
// 64-bit FNV-1a of a file's bytes.
std::uint64_t fnv1a_file(const std::filesystem::path& p);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace steerkit
