#include <gtest/gtest.h>

#include <algorithm>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "steerkit/errors.hpp"
#include "steerkit/harness.hpp"
#include "steerkit/random.hpp"

using namespace steerkit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("steerkit_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config(const std::string& experiment, const fs::path& out) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.seed = 42;
  c.output_dir = out;
  return c;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

}  // namespace

TEST(Csv, SeventeenDigitsAndHeader) {
  CsvTable t;
  t.header = {"a", "b"};
  t.add_row({0.1, 1.0 / 3.0});
  t.add_row({-2.0, 1e-300});
  EXPECT_EQ(format_csv(t), "a,b\n0.10000000000000001,0.33333333333333331\n-2,1e-300\n");
  EXPECT_THROW(t.add_row({1.0}), DimensionError);
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(format_double(NAN), "nan");
}

TEST(Report, EmptyReportHasSchema) {
  const fs::path dir = scratch("empty");
  Report r;
  r.experiment = "none";
  const auto files = emit_report(r, dir);
  ASSERT_EQ(files.size(), 1u);
  const Json j = Json::parse(read_file(files[0]));
  EXPECT_EQ(j["schema"], "steerkit-report/1");
  EXPECT_EQ(j["passed"], true);
  EXPECT_TRUE(j["checks"].empty());
}

TEST(Report, RoundTripReproducesFields) {
  Rng rng(1);
  Report r;
  r.experiment = "x";
  r.seed = 7;
  const Matrix m = random_normal(rng, 3, 4);
  const GluParams g = random_glu(rng, 4, 6, Activation::sigmoid);
  const AttnParams a = random_attn(rng, 4);
  SteeringAdapter s = SteeringAdapter::zeros(Locus::post_mlp, AdapterKind::bottleneck, 4, 2,
                                             Activation::silu);
  s.unflatten(random_normal_vector(rng, s.param_count()));
  WeightUpdate w = WeightUpdate::initialized(WeightTarget::w_g, 6, 4, 2, rng);
  w.b = random_normal(rng, 6, 2);
  r.body["m"] = to_json(m);
  r.body["glu"] = to_json(g);
  r.body["attn"] = to_json(a);
  r.body["steer"] = to_json(s);
  r.body["wupd"] = to_json(w);
  r.check("c1", true, "fine");
  r.check("c2", false, "bad");
  const fs::path dir = scratch("roundtrip");
  emit_report(r, dir);
  const Json j = Json::parse(read_file(dir / "report.json"));
  EXPECT_EQ(j["experiment"], "x");
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["passed"], false);
  EXPECT_EQ(j["checks"][1]["name"], "c2");
  const Json& b = j["results"];
  EXPECT_EQ(matrix_from_json(b["m"]), m);
  const GluParams g2 = glu_from_json(b["glu"]);
  EXPECT_EQ(g2.w_g, g.w_g);
  EXPECT_EQ(g2.w_d, g.w_d);
  EXPECT_EQ(g2.phi, g.phi);
  EXPECT_EQ(attn_from_json(b["attn"]).w_k, a.w_k);
  const SteeringAdapter s2 = steering_from_json(b["steer"]);
  EXPECT_EQ(s2.flatten(), s.flatten());
  EXPECT_EQ(s2.locus, s.locus);
  EXPECT_EQ(s2.phi, s.phi);
  const WeightUpdate w2 = weight_update_from_json(b["wupd"]);
  EXPECT_EQ(w2.b, w.b);
  EXPECT_EQ(w2.a, w.a);
  EXPECT_EQ(w2.target, w.target);
  EXPECT_EQ(r.first_failure(), "c2");
}

TEST(Report, CollapseGramCsvHasKRowsAndCols) {
  Rng rng(2);
  const CollapseCase c = make_collapse_case(rng);
  const CollapseReport rep = simulate_collapse(c.model, c.target, {});
  Report r;
  CsvTable t;
  for (std::size_t j = 0; j < rep.k; ++j) t.header.push_back("c" + std::to_string(j));
  for (std::size_t i = 0; i < rep.k; ++i) t.add_row(rep.gram.row_vector(i));
  r.tables["gram"] = t;
  const fs::path dir = scratch("gram");
  emit_report(r, dir);
  const auto lines = split_lines(read_file(dir / "gram.csv"));
  ASSERT_EQ(lines.size(), rep.k + 1);
  for (const auto& l : lines) EXPECT_EQ(std::count(l.begin(), l.end(), ','), static_cast<long>(rep.k - 1));
}

TEST(Config, ParsesAllFields) {
  const Json j = Json::parse(R"({
    "experiment": "theorem1-scan",
    "dims": {"d_model": 6, "d_mlp": 12, "positions": 2, "samples": 20},
    "seed": 9,
    "tolerances": {"abs_gap": 1e-9},
    "output_dir": "somewhere",
    "options": {"trials": 5}
  })");
  const ExperimentConfig c = config_from_json(j);
  EXPECT_EQ(c.experiment, "theorem1-scan");
  EXPECT_EQ(c.dims.d_model, 6u);
  EXPECT_EQ(c.dims.samples, 20u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.tolerance("abs_gap", 1.0), 1e-9);
  EXPECT_EQ(c.tolerance("other", 2.0), 2.0);
  EXPECT_EQ(c.output_dir, "somewhere");
  EXPECT_EQ(c.options["trials"], 5);
  validate_config(c);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"experment": "x"})")), ConfigurationError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"dims": {"d_model": -1}})")), ConfigurationError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"seed": "abc"})")), ConfigurationError);
  EXPECT_THROW(config_from_json(Json::parse("[1]")), ConfigurationError);
  ExperimentConfig c;
  c.experiment = "nope";
  EXPECT_THROW(validate_config(c), ConfigurationError);
  c.experiment = "mlp-ratio";
  c.dims.d_model = 65;
  EXPECT_THROW(validate_config(c), ConfigurationError);
  c.dims.d_model = 8;
  c.dims.d_mlp = 1;
  EXPECT_THROW(validate_config(c), ConfigurationError);
  EXPECT_THROW(load_config("/nonexistent/steerkit.json"), IoError);
}

TEST(RunExperiment, ExitCodes) {
  RunOutcome r = run_experiment(small_config("nope", scratch("nope")));
  EXPECT_EQ(r.exit_code, kExitConfig);
  const fs::path blocker = scratch("blocker");
  { std::ofstream(blocker) << "x"; }
  r = run_experiment(small_config("mlp-ratio", blocker / "sub"));
  EXPECT_EQ(r.exit_code, kExitIo);
  ExperimentConfig c = small_config("theorem1-scan", scratch("strict"));
  c.tolerances["abs_gap"] = -1.0;
  EXPECT_EQ(run_experiment(c).exit_code, kExitConfig);
  ExperimentConfig bad = small_config("collapse-sim", scratch("bad_option"));
  bad.options["pairs"] = "many";
  EXPECT_EQ(run_experiment(bad).exit_code, kExitConfig);
}

TEST(RunExperiment, FailingInvariantIsNamed) {
  ExperimentConfig j = small_config("joint-2d", scratch("joint_fail"));
  j.options["steps"] = 5;
  const RunOutcome r = run_experiment(j);
  EXPECT_EQ(r.exit_code, kExitInvariant);
  EXPECT_EQ(r.failing_check, "joint_reaches_target");
  EXPECT_TRUE(fs::exists(j.output_dir / "report.json"));
}

TEST(RunExperiment, BoundsScanZeroPerturbation) {
  ExperimentConfig c = small_config("bounds-scan", scratch("bz"));
  c.options["trials"] = 100;
  c.options["eps"] = Json::array({0.0});
  c.options["delta"] = Json::array({0.0});
  const RunOutcome r = run_experiment(c);
  ASSERT_EQ(r.exit_code, kExitOk) << r.failing_check << r.message;
  bool found = false;
  for (const auto& ch : r.report->checks) found |= ch.name == "zero_perturbation_zero_lhs" && ch.passed;
  EXPECT_TRUE(found);
}

TEST(RunExperiment, CollapseWritesPairedGramTables) {
  ExperimentConfig c = small_config("collapse-sim", scratch("collapse"));
  c.options["pairs"] = 4;
  const RunOutcome r = run_experiment(c);
  ASSERT_EQ(r.exit_code, kExitOk) << r.failing_check << r.message;
  EXPECT_TRUE(fs::exists(c.output_dir / "gram_no_orth.csv"));
  EXPECT_TRUE(fs::exists(c.output_dir / "gram_orth.csv"));
  const Json j = Json::parse(read_file(c.output_dir / "report.json"));
  EXPECT_EQ(j["schema"], kReportSchema);
  EXPECT_GT(j["results"]["example_no_orth"]["diag_mass"].get<double>(),
            j["results"]["example_orth"]["diag_mass"].get<double>());
}

TEST(RunExperiment, EveryExperimentIsDeterministic) {
  for (const auto& e : experiment_registry()) {
    ExperimentConfig c = small_config(e.name, scratch("det_a"));
    c.options = Json::object();
    if (e.name == "oracle-fit") {
      c.options["pairs"] = 2;
      c.options["steps"] = 20;
    }
    if (e.name == "bounds-scan") c.options["trials"] = 100;
    if (e.name == "firstorder-slopes") c.options["seeds"] = 5;
    const RunOutcome a = run_experiment(c);
    c.output_dir = scratch("det_b");
    const RunOutcome b = run_experiment(c);
    ASSERT_EQ(a.exit_code, b.exit_code) << e.name;
    ASSERT_EQ(a.files.size(), b.files.size()) << e.name;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
      EXPECT_EQ(a.files[i].filename(), b.files[i].filename());
      EXPECT_EQ(fnv1a_file(a.files[i]), fnv1a_file(b.files[i])) << e.name << " " << a.files[i];
    }
  }
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}
