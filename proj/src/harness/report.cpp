#include "steerkit/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "steerkit/errors.hpp"

namespace steerkit {
namespace {

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os << text;
  os.flush();
  if (!os) throw IoError("failed writing " + p.string());
}

Json optional_json(const std::optional<double>& x) { return x ? finite_or_null(*x) : Json(nullptr); }

}  // namespace

void CsvTable::add_row(Vector row) {
  if (!header.empty() && row.size() != header.size()) {
    throw DimensionError("csv: row width " + std::to_string(row.size()) + " vs header " +
                         std::to_string(header.size()));
  }
  rows.push_back(std::move(row));
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

void Report::check(const std::string& name, bool ok, const std::string& detail) {
  checks.push_back({name, ok, detail});
}

bool Report::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

std::string Report::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed) return c.name;
  }
  return {};
}

Json Report::to_json() const {
  Json j;
  j["schema"] = kReportSchema;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["config"] = config;
  j["passed"] = passed();
  Json cs = Json::array();
  for (const auto& c : checks) {
    cs.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  j["checks"] = cs;
  j["results"] = body;
  Json names = Json::array();
  for (const auto& [name, table] : tables) names.push_back(name + ".csv");
  j["tables"] = names;
  return j;
}

std::vector<std::filesystem::path> emit_report(const Report& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  const auto json_path = dir / "report.json";
  write_file(json_path, r.to_json().dump(2) + "\n");
  written.push_back(json_path);
  for (const auto& [name, table] : r.tables) {
    const auto p = dir / (name + ".csv");
    write_file(p, format_csv(table));
    written.push_back(p);
  }
  return written;
}

Json to_json(const Vector& v) {
  Json j = Json::array();
  for (double x : v) j.push_back(finite_or_null(x));
  return j;
}

Json to_json(const Matrix& m) {
  Json j = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) j.push_back(to_json(m.row_vector(i)));
  return j;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigurationError("expected a JSON array of numbers");
  Vector v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ConfigurationError("expected a number in array");
    v.push_back(x.get<double>());
  }
  return v;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigurationError("expected a JSON array of rows");
  std::vector<Vector> rows;
  for (const auto& r : j) rows.push_back(vector_from_json(r));
  try {
    return Matrix::from_rows(rows);
  } catch (const DimensionError& e) {
    throw ConfigurationError(std::string("matrix: ") + e.what());
  }
}

Json to_json(const GluParams& p) {
  Json j;
  j["d_model"] = p.d_model();
  j["d_mlp"] = p.d_mlp();
  j["phi"] = to_string(p.phi);
  j["w_g"] = to_json(p.w_g);
  j["w_u"] = to_json(p.w_u);
  j["w_d"] = to_json(p.w_d);
  return j;
}

GluParams glu_from_json(const Json& j) {
  GluParams p;
  p.phi = activation_from_string(j.at("phi").get<std::string>());
  p.w_g = matrix_from_json(j.at("w_g"));
  p.w_u = matrix_from_json(j.at("w_u"));
  p.w_d = matrix_from_json(j.at("w_d"));
  if (j.contains("d_model") && j["d_model"].get<std::size_t>() != p.d_model()) {
    throw ConfigurationError("glu: d_model does not match w_g");
  }
  if (j.contains("d_mlp") && j["d_mlp"].get<std::size_t>() != p.d_mlp()) {
    throw ConfigurationError("glu: d_mlp does not match w_g");
  }
  p.validate();
  return p;
}

Json to_json(const AttnParams& p) {
  Json j;
  j["d_model"] = p.d_model();
  j["w_q"] = to_json(p.w_q);
  j["w_k"] = to_json(p.w_k);
  j["w_v"] = to_json(p.w_v);
  return j;
}

AttnParams attn_from_json(const Json& j) {
  AttnParams p;
  p.w_q = matrix_from_json(j.at("w_q"));
  p.w_k = matrix_from_json(j.at("w_k"));
  p.w_v = matrix_from_json(j.at("w_v"));
  p.validate();
  return p;
}

Json to_json(const SteeringAdapter& a) {
  Json j;
  j["locus"] = to_string(a.locus);
  j["param"] = to_string(a.kind);
  switch (a.kind) {
    case AdapterKind::full: j["m"] = to_json(a.m); break;
    case AdapterKind::bottleneck:
      j["phi"] = to_string(a.phi);
      j["w1"] = to_json(a.w1);
      j["w2"] = to_json(a.w2);
      break;
    case AdapterKind::rank1:
      j["u"] = to_json(a.u);
      j["v"] = to_json(a.v);
      break;
    case AdapterKind::vector: j["v"] = to_json(a.v); break;
  }
  if (a.non_canonical()) j["non_canonical"] = true;
  return j;
}

SteeringAdapter steering_from_json(const Json& j) {
  SteeringAdapter a;
  a.locus = locus_from_string(j.at("locus").get<std::string>());
  a.kind = adapter_kind_from_string(j.at("param").get<std::string>());
  switch (a.kind) {
    case AdapterKind::full: a.m = matrix_from_json(j.at("m")); break;
    case AdapterKind::bottleneck:
      a.phi = activation_from_string(j.value("phi", std::string("identity")));
      a.w1 = matrix_from_json(j.at("w1"));
      a.w2 = matrix_from_json(j.at("w2"));
      break;
    case AdapterKind::rank1:
      a.u = vector_from_json(j.at("u"));
      a.v = vector_from_json(j.at("v"));
      break;
    case AdapterKind::vector: a.v = vector_from_json(j.at("v")); break;
  }
  a.validate();
  return a;
}

Json to_json(const WeightUpdate& w) {
  Json j;
  j["target"] = to_string(w.target);
  j["scale"] = w.scale;
  j["b"] = to_json(w.b);
  j["a"] = to_json(w.a);
  return j;
}

WeightUpdate weight_update_from_json(const Json& j) {
  WeightUpdate w;
  w.target = weight_target_from_string(j.at("target").get<std::string>());
  w.scale = j.value("scale", 1.0);
  w.b = matrix_from_json(j.at("b"));
  w.a = matrix_from_json(j.at("a"));
  if (w.b.cols() != w.a.rows()) throw ConfigurationError("weight update: b/a rank mismatch");
  return w;
}

Json to_json(const FirstOrderReport& r) {
  Json j;
  j["epsilon_grid"] = to_json(r.epsilon_grid);
  j["steer_residual"] = to_json(r.steer_residual);
  j["ft_residual"] = to_json(r.ft_residual);
  j["mismatch_term_norm"] = finite_or_null(r.mismatch_term_norm);
  j["steer_slope"] = optional_json(r.steer_slope);
  j["ft_slope"] = optional_json(r.ft_slope);
  return j;
}

Json to_json(const PrincipalAngleReport& r) {
  Json j;
  j["sigma"] = to_json(r.sigma);
  j["angles"] = to_json(r.angles);
  j["canonical_angles"] = to_json(r.canonical_angles);
  j["predicted_error"] = r.predicted_error;
  j["predicted_error_canonical"] = r.predicted_error_canonical;
  j["measured_error"] = r.measured_error;
  j["abs_gap"] = r.abs_gap;
  j["tolerance"] = r.tolerance;
  j["rank_xy"] = r.rank_xy;
  j["rank_deficient"] = r.rank_deficient;
  j["condition_number"] = finite_or_null(r.condition_number);
  return j;
}

Json to_json(const CollapseReport& r) {
  Json j;
  j["k"] = r.k;
  j["gram"] = to_json(r.gram);
  j["diag_mass"] = r.diag_mass;
  j["offdiag_mass"] = r.offdiag_mass;
  j["top_overlap"] = r.top_overlap;
  j["containment_dh"] = r.containment_dh;
  j["containment_dw"] = r.containment_dw;
  j["max_update_ratio"] = r.max_update_ratio;
  j["final_loss"] = r.loss_curve.empty() ? Json(nullptr) : finite_or_null(r.loss_curve.back());
  return j;
}

Json to_json(const BoundCheckReport& r) {
  Json j;
  j["lemma"] = to_string(r.lemma);
  j["trials"] = r.trials;
  j["max_lhs_over_rhs"] = finite_or_null(r.max_lhs_over_rhs);
  j["violations"] = r.violations;
  j["max_lhs"] = r.max_lhs;
  if (r.lemma == Lemma::attention) {
    j["statement_violations"] = r.statement_violations;
    j["max_statement_ratio"] = finite_or_null(r.max_statement_ratio);
    j["softmax_sub_bound_violations"] = r.sub_bound_violations;
  }
  return j;
}

Json to_json(const TrainResult& r) {
  Json cfg;
  cfg["lr"] = r.config.lr;
  cfg["steps"] = r.config.steps;
  cfg["objective"] = to_string(r.config.objective);
  cfg["trainables"] = to_string(r.config.trainables);
  cfg["orth_cadence"] = to_string(r.config.orth_cadence);
  cfg["site"] = to_string(r.config.site);
  cfg["seed"] = r.config.seed;
  Json j;
  j["config"] = cfg;
  j["seed"] = r.config.seed;
  j["initial_loss"] = finite_or_null(r.initial_loss);
  j["final_loss"] = finite_or_null(r.final_loss);
  j["grad_check_max_rel_err"] = finite_or_null(r.grad_check_max_rel_err);
  j["halvings"] = r.halvings;
  j["final_lr"] = r.final_lr;
  j["steps_run"] = r.steps_run;
  if (r.config.orth_cadence == OrthCadence::every_step) j["max_orth_overlap"] = r.max_orth_overlap;
  j["loss_curve"] = to_json(r.loss_curve);
  Json params;
  if (r.has_steer) params["steering"] = to_json(r.steer);
  if (r.has_wupd) params["weight_update"] = to_json(r.wupd);
  j["final_params"] = params;
  return j;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& p) { return fnv1a(read_file(p)); }

}  // namespace steerkit
