// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "oracles.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/harness.hpp"
#include "steerkit/random.hpp"
#include "steerkit/report.hpp"

using namespace steerkit;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kJacobianRelErr = 1e-6;
constexpr double kJacobianStep = 1e-5;
constexpr double kJacobianSeconds = 10.0;
constexpr double kMinSlope = 0.9;
constexpr double kDwdOnlyResidual = 1e-12;
constexpr double kTheoremGap = 1e-8;
constexpr double kTheoremGdGap = 1e-4;
constexpr double kTheoremSeconds = 60.0;
constexpr double kTransferErr = 1e-10;
constexpr double kAligned = 0.99;
constexpr double kSeparated = 0.05;
constexpr double kOverlap = 1e-10;
constexpr double kRetained = 1e-10;
constexpr double kBoundSeconds = 60.0;
constexpr double kJointMse = 1e-6;
constexpr double kJointMargin = 10.0;
constexpr double kOracleFitResidual = 0.05;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double x) { return format_double(x); }

Matrix with_norm(Matrix m, double n) { return m * (n / oracle::fro(m)); }

// ---- 1
Outcome jacobians() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng root(1001);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = root.split(i);
    const std::size_t d = rng.uniform_int(2, 32);
    const std::size_t dm = rng.uniform_int(2, 64);
    const Activation phi = i % 2 ? Activation::silu : Activation::sigmoid;
    const GluParams p = random_glu(rng, d, dm, phi);
    const Vector h = random_normal_vector(rng, d);
    worst = std::max(worst, oracle::rel(glu_jacobian(p, h),
                                        central_difference_jacobian(
                                            [&](const Vector& x) { return glu_forward(p, x); }, h,
                                            kJacobianStep)));
    const Matrix w1 = random_normal(rng, dm, d, 1.0 / std::sqrt(static_cast<double>(d)));
    const Matrix w2 = random_normal(rng, d, dm, 1.0 / std::sqrt(static_cast<double>(dm)));
    worst = std::max(worst, oracle::rel(mlp_jacobian(w1, w2, phi, h),
                                        central_difference_jacobian(
                                            [&](const Vector& x) { return mlp_forward(w1, w2, phi, x); },
                                            h, kJacobianStep)));
  }
  const double secs = seconds_since(t0);
  return {worst <= kJacobianRelErr && secs < kJacobianSeconds,
          "max rel err " + num(worst) + ", " + num(secs) + " s"};
}

// Least-squares slope of log r against log eps, computed here independently.
double fitted_slope(const Vector& eps, const Vector& r) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (eps[i] > 1e-2 * (1 + 1e-12)) continue;
    const double x = std::log(eps[i]), y = std::log(r[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---- 2
Outcome first_order() {
  Rng root(1002);
  double worst_slope = INFINITY, worst_exact = 0.0;
  for (int s = 0; s < 50; ++s) {
    Rng rng = root.split(s);
    const GluParams p = random_glu(rng, 8, 16, Activation::silu);
    const Vector h = random_normal_vector(rng, 8);
    const Vector dh = scaled(random_unit_vector(rng, 8), 0.05);
    const Matrix dwg = with_norm(random_normal(rng, 16, 8), 0.05);
    const Matrix dwu = with_norm(random_normal(rng, 16, 8), 0.05);
    const Matrix dwd = with_norm(random_normal(rng, 8, 16), 0.05);
    const FirstOrderReport r = steer_vs_ft_expansion(p, h, dh, dwg, dwu, dwd);
    worst_slope = std::min({worst_slope, fitted_slope(r.epsilon_grid, r.steer_residual),
                            fitted_slope(r.epsilon_grid, r.ft_residual)});
    const FirstOrderReport e = steer_vs_ft_expansion(p, h, dh, Matrix(16, 8), Matrix(16, 8), dwd);
    for (double v : e.ft_residual) worst_exact = std::max(worst_exact, v);
  }
  return {worst_slope >= kMinSlope && worst_exact <= kDwdOnlyResidual,
          "min slope " + num(worst_slope) + ", max dW_d-only residual " + num(worst_exact)};
}

// ---- 3
Outcome theorem1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng root(1003);
  double worst = 0.0, worst_gd = 0.0, worst_oracle = 0.0;
  for (int i = 0; i < 200; ++i) {
    Rng rng = root.split(i);
    const std::size_t d = rng.uniform_int(2, 16);
    const std::size_t n = rng.uniform_int(2 * d, 64);
    const Matrix x = random_normal(rng, d, n);
    const Matrix y = random_normal(rng, d, n, 0.5);
    const Matrix a_p = random_normal(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
    const PrincipalAngleReport r = theorem1_error(x, y, a_p);
    worst = std::max(worst, std::abs(r.measured_error - r.predicted_error));
    worst_oracle = std::max(worst_oracle, std::abs(r.measured_error - oracle::theorem1_error(x, y, a_p)));
    if (i % 10 == 0) {
      worst_gd = std::max(worst_gd, std::abs(oracle::theorem1_gd(x, y, a_p, 3000) - r.measured_error));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kTheoremGap && worst_gd <= kTheoremGdGap && worst_oracle <= kTheoremGap &&
              secs < kTheoremSeconds,
          "max |measured - predicted| " + num(worst) + ", max GD gap " + num(worst_gd) +
              ", normal-equation gap " + num(worst_oracle) + ", " + num(secs) + " s"};
}

// ---- 4
Outcome transfer() {
  Rng root(1004);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = root.split(i);
    const std::size_t d = rng.uniform_int(3, 16);
    const std::size_t ka = rng.uniform_int(1, d - 1);
    const std::size_t kb = rng.uniform_int(1, d - ka);
    // Oblique spans with trivial intersection: B leans on A but adds fresh
    // orthogonal directions.
    const Matrix q = oracle::gram_schmidt(random_normal(rng, d, d));
    const Matrix a = q.col_block(0, ka) * random_normal(rng, ka, ka);
    const Matrix b = q.col_block(ka, kb) + q.col_block(0, ka) * random_normal(rng, ka, kb, 0.7);
    const Matrix a_p = random_normal(rng, d, d);
    const Matrix m = projection_transfer(a_p, a, b);
    for (int s = 0; s < 5; ++s) {
      const Vector residual = oracle::matvec(a, random_normal_vector(rng, ka));
      const Vector mlp = oracle::matvec(b, random_normal_vector(rng, kb));
      const Vector want = oracle::matvec(a_p, mlp);
      const Vector got = oracle::matvec(m, add(residual, mlp));
      worst = std::max(worst, oracle::vnorm(sub(got, want)) / std::max(1.0, oracle::vnorm(want)));
    }
  }
  return {worst <= kTransferErr, "max relative pointwise error " + num(worst)};
}

// ---- 5
Outcome collapse() {
  Rng root(1005);
  double min_off = INFINITY, max_on = 0.0;
  for (int i = 0; i < 20; ++i) {
    Rng rng = root.split(i);
    const CollapseCase c = make_collapse_case(rng);
    CollapseOptions o;
    const CollapseReport off = simulate_collapse(c.model, c.target, o);
    o.with_orth = true;
    const CollapseReport on = simulate_collapse(c.model, c.target, o);
    // Top left singular vectors recomputed with the eigen oracle.
    auto top = [](const Matrix& m) { return oracle::sym_eigen(oracle::matmul(m, oracle::transpose(m))).vectors.col(0); };
    min_off = std::min(min_off, std::abs(dot(top(off.dh), top(off.dw))));
    max_on = std::max(max_on, std::abs(dot(top(on.dh), top(on.dw))));
  }
  return {min_off >= kAligned && max_on <= kSeparated,
          "min overlap without projection " + num(min_off) + ", max with " + num(max_on)};
}

// ---- 6
Outcome orthogonality() {
  Rng root(1006);
  double worst_overlap = 0.0, worst_idem = 0.0, worst_short = -INFINITY;
  bool norm_ok = true;
  for (int i = 0; i < 100; ++i) {
    Rng rng = root.split(i);
    const std::size_t d = 32, r = std::size_t{1} << (i % 3), rs = 8;
    JointAdapter j;
    j.steer = SteeringAdapter::zeros(Locus::post_block, AdapterKind::bottleneck, d, rs);
    j.steer.w1 = random_normal(rng, rs, d);
    j.steer.w2 = random_normal(rng, d, rs);
    j.wupd.b = random_normal(rng, d, r);
    j.wupd.a = random_normal(rng, r, 64);
    const JointAdapter once = project_orthogonal(j);
    const JointAdapter twice = project_orthogonal(once);
    for (std::size_t c = 0; c < rs; ++c)
      for (std::size_t k = 0; k < r; ++k) {
        const Vector w = once.steer.w2.col(c), b = j.wupd.b.col(k);
        worst_overlap = std::max(worst_overlap, std::abs(dot(w, b)) / (oracle::vnorm(w) * oracle::vnorm(b)));
      }
    worst_idem = std::max(worst_idem, max_abs_diff(once.steer.w2, twice.steer.w2));
    if (oracle::fro(once.steer.w2) > oracle::fro(j.steer.w2)) norm_ok = false;
    worst_short = std::max(worst_short, oracle::fro(oracle::project_out(j.steer.w2, j.wupd.b)) -
                                            oracle::fro(once.steer.w2));
  }
  return {worst_overlap <= kOverlap && worst_idem <= kOverlap && norm_ok && worst_short <= kRetained,
          "max overlap " + num(worst_overlap) + ", idempotence " + num(worst_idem) +
              ", retained-norm shortfall vs Gram-Schmidt " + num(worst_short) +
              (norm_ok ? "" : ", norm increased")};
}

// ---- 7
Outcome bounds() {
  const auto t0 = std::chrono::steady_clock::now();
  BoundScanOptions o;
  o.trials = 1000;
  std::size_t violations = 0;
  std::string per;
  for (Lemma l : {Lemma::layernorm, Lemma::linear, Lemma::glu_general, Lemma::glu_sigmoid,
                  Lemma::attention}) {
    const BoundCheckReport r = scan_bound(l, 1007, o);
    std::size_t v = 0;
    for (double ratio : r.ratios) v += ratio > 1.0 + kBoundSlack;
    violations += v + (r.trials < 1000) + r.violations;
    per += " " + to_string(l) + "=" + std::to_string(v) + "/" + std::to_string(r.trials);
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < kBoundSeconds,
          "violations" + per + ", " + num(secs) + " s"};
}

// ---- 8
Outcome joint2d() {
  const Joint2dProblem p = make_joint_2d(64, 0.3, -0.7);
  GdOptions o;
  o.steps = 20000;
  o.lr = 3.0;
  const double joint = train_joint_2d(p, Joint2dMode::joint, o).final_mse;
  o.lr = 1.0;
  const double steer = train_joint_2d(p, Joint2dMode::steering_only, o).final_mse;
  const double ft = train_joint_2d(p, Joint2dMode::ft_only, o).final_mse;
  const double fs = oracle::kJoint2dSteeringFloor, ff = oracle::kJoint2dFtFloor;
  const bool ok = joint <= kJointMse && steer >= fs * (1 - 1e-9) && ft >= ff * (1 - 1e-9) &&
                  kJointMargin * joint <= std::min(fs, ff);
  return {ok, "joint " + num(joint) + ", steering-only " + num(steer) + " (floor " + num(fs) +
                  "), FT-only " + num(ft) + " (floor " + num(ff) + ")"};
}

// ---- 9
Outcome oracle_fit() {
  Rng root(1009);
  const std::size_t d = 8, dm = 16, samples = 128;
  double worst = 0.0;
  std::size_t misordered = 0;
  for (int i = 0; i < 20; ++i) {
    Rng rng = root.split(i);
    const GluParams g = random_glu(rng, d, dm, Activation::silu, 0.1);
    const AttnParams a = random_attn(rng, d, 0.1);
    GluParams g2 = g;
    AttnParams a2 = a;
    for (Matrix* w : {&g2.w_g, &g2.w_u, &g2.w_d, &a2.w_q, &a2.w_k, &a2.w_v}) {
      *w += with_norm(random_normal(rng, w->rows(), w->cols()), 1e-2 * oracle::fro(*w));
    }
    Matrix post_block(d, samples), post_mlp(d, samples), target(d, samples);
    for (std::size_t s = 0; s < samples; ++s) {
      const Sequence hs = {oracle::layernorm(random_normal_vector(rng, d))};
      const BlockTrace tb = block_forward(g, a, hs), tf = block_forward(g2, a2, hs);
      post_block.set_col(s, tb.post_block[0]);
      post_mlp.set_col(s, tb.post_mlp[0]);
      target.set_col(s, sub(tf.post_block[0], tb.post_block[0]));
    }
    auto residual = [&](const Matrix& reg) {
      const Matrix m = oracle::least_squares(reg, target);
      return oracle::fro(oracle::minus(oracle::matmul(m, reg), target)) / oracle::fro(target);
    };
    const double pb = residual(post_block), pm = residual(post_mlp);
    if (!(pb <= pm)) ++misordered;
    worst = std::max(worst, pb);
  }
  return {misordered == 0 && worst <= kOracleFitResidual,
          std::to_string(misordered) + " pairs with post-block worse, max post-block residual " + num(worst)};
}

// ---- 10
Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "steerkit_acceptance";
  std::size_t files = 0, mismatched = 0, failed_runs = 0;
  for (const auto& e : experiment_registry()) {
    std::vector<std::pair<std::string, std::uint64_t>> hashes[2];
    for (int run = 0; run < 2; ++run) {
      ExperimentConfig c;
      c.experiment = e.name;
      c.seed = 42;
      c.output_dir = root / (e.name + "_" + std::to_string(run));
      fs::remove_all(c.output_dir);
      const RunOutcome r = run_experiment(c);
      if (r.exit_code != kExitOk) ++failed_runs;
      for (const auto& f : r.files) hashes[run].push_back({f.filename().string(), fnv1a_file(f)});
    }
    files += hashes[0].size();
    if (hashes[0] != hashes[1] || hashes[0].empty()) ++mismatched;
  }
  return {mismatched == 0,
          std::to_string(files) + " files hashed over 8 experiments, " + std::to_string(mismatched) +
              " differing, " + std::to_string(failed_runs) + " runs with failing invariants"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"Jacobian correctness", jacobians},
      {"first-order regime", first_order},
      {"principal-angle error formula", theorem1},
      {"post-block transfer map", transfer},
      {"collapse with and without projection", collapse},
      {"orthogonality projection", orthogonality},
      {"error-propagation bounds", bounds},
      {"joint expressivity (2D ReLU)", joint2d},
      {"oracle fitting", oracle_fit},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
    ++index;
  }
  return failures == 0 ? 0 : 1;
}
