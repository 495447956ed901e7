#include <algorithm>
#include <cmath>
#include <sstream>

#include "steerkit/errors.hpp"
#include "steerkit/harness.hpp"
#include "steerkit/kernels.hpp"
#include "steerkit/random.hpp"

namespace steerkit {
namespace {

template <typename T>
T option(const ExperimentConfig& cfg, const char* key, T fallback) {
  if (!cfg.options.contains(key)) return fallback;
  try {
    return cfg.options.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("options.") + key + ": " + e.what());
  }
}

Vector option_list(const ExperimentConfig& cfg, const char* key, const Vector& fallback) {
  if (!cfg.options.contains(key)) return fallback;
  const Json& j = cfg.options.at(key);
  if (j.is_number()) return {j.get<double>()};
  try {
    return vector_from_json(j);
  } catch (const ConfigurationError& e) {
    throw ConfigurationError(std::string("options.") + key + ": " + e.what());
  }
}

std::string fmt(double x) { return format_double(x); }

std::string worst(const char* what, double value, double limit) {
  std::ostringstream os;
  os << what << " " << fmt(value) << " vs limit " << fmt(limit);
  return os.str();
}

Matrix scaled_to_norm(Matrix m, double target) {
  const double n = frobenius_norm(m);
  if (n == 0.0) return m;
  m *= target / n;
  return m;
}

Vector on_ln_sphere(Rng& rng, std::size_t d) { return layernorm(random_normal_vector(rng, d)); }

// W + scale ||W|| E / ||E|| on all six block weights.
TrainModel perturbed(const TrainModel& base, double scale, Rng& rng) {
  TrainModel ft = base;
  for (Matrix* w : {&ft.glu.w_g, &ft.glu.w_u, &ft.glu.w_d, &ft.attn.w_q, &ft.attn.w_k,
                    &ft.attn.w_v}) {
    const Matrix e = random_normal(rng, w->rows(), w->cols());
    *w += scaled_to_norm(e, scale * frobenius_norm(*w));
  }
  return ft;
}

Vector curve_rows(std::size_t i, double v) { return {static_cast<double>(i), v}; }

CsvTable curve_table(const Vector& curve) {
  CsvTable t;
  t.header = {"point", "loss"};
  for (std::size_t i = 0; i < curve.size(); ++i) t.add_row(curve_rows(i, curve[i]));
  return t;
}

CsvTable gram_table(const Matrix& g) {
  CsvTable t;
  for (std::size_t j = 0; j < g.cols(); ++j) t.header.push_back("dw_" + std::to_string(j));
  for (std::size_t i = 0; i < g.rows(); ++i) t.add_row(g.row_vector(i));
  return t;
}

// ---------------------------------------------------------------- firstorder

Report firstorder_slopes(const ExperimentConfig& cfg) {
  Report r;
  const std::size_t d = cfg.dims.d_model;
  const std::size_t dm = cfg.dims.d_mlp;
  const auto seeds = option<std::size_t>(cfg, "seeds", 50);
  const auto jac_instances = option<std::size_t>(cfg, "jacobian_instances", 100);
  const auto jac_max_dim = option<std::size_t>(cfg, "jacobian_max_dim", 32);
  const double perturbation = option<double>(cfg, "perturbation", 0.05);
  const double min_slope = cfg.tolerance("min_slope", 0.9);
  const double exact_tol = cfg.tolerance("dwd_only_residual", 1e-12);
  const double jac_tol = cfg.tolerance("jacobian_rel_err", 1e-6);
  if (!(perturbation > 0.0 && perturbation <= kMaxPerturbationNorm)) {
    throw ConfigurationError("options.perturbation must lie in (0, 0.1]");
  }

  std::vector<FirstOrderReport> full(seeds), dwd_only(seeds);
  const Rng root(cfg.seed, 0xF1257);
  kernels::omp::for_each_index(seeds, [&](std::size_t s) {
    Rng rng = root.split(s);
    const GluParams p = random_glu(rng, d, dm, Activation::silu);
    const Vector h = random_normal_vector(rng, d);
    const Vector dh = scaled(random_unit_vector(rng, d), perturbation);
    const Matrix dwg = scaled_to_norm(random_normal(rng, dm, d), perturbation);
    const Matrix dwu = scaled_to_norm(random_normal(rng, dm, d), perturbation);
    const Matrix dwd = scaled_to_norm(random_normal(rng, d, dm), perturbation);
    full[s] = steer_vs_ft_expansion(p, h, dh, dwg, dwu, dwd);
    dwd_only[s] = steer_vs_ft_expansion(p, h, dh, Matrix(dm, d), Matrix(dm, d), dwd);
  });

  CsvTable slopes;
  slopes.header = {"seed_index", "steer_slope", "ft_slope", "mismatch_term_norm"};
  for (double e : kEpsilonGrid) slopes.header.push_back("steer_residual_eps_" + fmt(e));
  for (double e : kEpsilonGrid) slopes.header.push_back("ft_residual_eps_" + fmt(e));
  for (double e : kEpsilonGrid) slopes.header.push_back("dwd_only_ft_residual_eps_" + fmt(e));
  double worst_slope = INFINITY;
  double worst_exact = 0.0;
  bool slopes_defined = true;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto& f = full[s];
    const double ss = f.steer_slope.value_or(NAN);
    const double fs = f.ft_slope.value_or(NAN);
    if (!f.steer_slope || !f.ft_slope) slopes_defined = false;
    worst_slope = std::min({worst_slope, f.steer_slope.value_or(INFINITY), f.ft_slope.value_or(INFINITY)});
    Vector row = {static_cast<double>(s), ss, fs, f.mismatch_term_norm};
    row.insert(row.end(), f.steer_residual.begin(), f.steer_residual.end());
    row.insert(row.end(), f.ft_residual.begin(), f.ft_residual.end());
    row.insert(row.end(), dwd_only[s].ft_residual.begin(), dwd_only[s].ft_residual.end());
    for (double v : dwd_only[s].ft_residual) worst_exact = std::max(worst_exact, v);
    slopes.add_row(std::move(row));
  }
  r.tables["slopes"] = std::move(slopes);
  r.body["seeds"] = seeds;
  r.body["min_slope"] = seeds ? Json(worst_slope) : Json(nullptr);
  r.body["max_dwd_only_ft_residual"] = worst_exact;
  r.check("slopes_defined", slopes_defined, "every residual nonzero on the fitted grid");
  r.check("first_order_slope", worst_slope >= min_slope, worst("min slope", worst_slope, min_slope));
  r.check("dwd_only_exact", worst_exact <= exact_tol, worst("max residual", worst_exact, exact_tol));

  // Jacobians against central differences.
  struct JacRow {
    std::size_t d_model, d_mlp;
    double glu_err, mlp_err;
  };
  std::vector<JacRow> jac(jac_instances);
  const Rng jroot(cfg.seed, 0x7AC0B);
  const Activation phis[] = {Activation::silu, Activation::sigmoid, Activation::identity};
  kernels::omp::for_each_index(jac_instances, [&](std::size_t i) {
    Rng rng = jroot.split(i);
    const std::size_t jd = rng.uniform_int(2, std::max<std::size_t>(2, jac_max_dim));
    const std::size_t jm = rng.uniform_int(2, 2 * jd);
    const Activation phi = phis[i % 3];
    const GluParams p = random_glu(rng, jd, jm, phi);
    const Vector h = random_normal_vector(rng, jd);
    const Matrix fd_glu = central_difference_jacobian(
        [&](const Vector& x) { return glu_forward(p, x); }, h, kFiniteDifferenceStep);
    const Matrix w1 = random_normal(rng, jm, jd, 1.0 / std::sqrt(static_cast<double>(jd)));
    const Matrix w2 = random_normal(rng, jd, jm, 1.0 / std::sqrt(static_cast<double>(jm)));
    const Matrix fd_mlp = central_difference_jacobian(
        [&](const Vector& x) { return mlp_forward(w1, w2, phi, x); }, h, kFiniteDifferenceStep);
    jac[i] = {jd, jm, relative_error(glu_jacobian(p, h), fd_glu),
              relative_error(mlp_jacobian(w1, w2, phi, h), fd_mlp)};
  });
  CsvTable jt;
  jt.header = {"instance", "d_model", "d_mlp", "glu_rel_err", "mlp_rel_err"};
  double worst_jac = 0.0;
  for (std::size_t i = 0; i < jac_instances; ++i) {
    jt.add_row({static_cast<double>(i), static_cast<double>(jac[i].d_model),
                static_cast<double>(jac[i].d_mlp), jac[i].glu_err, jac[i].mlp_err});
    worst_jac = std::max({worst_jac, jac[i].glu_err, jac[i].mlp_err});
  }
  r.tables["jacobian"] = std::move(jt);
  r.body["jacobian_instances"] = jac_instances;
  r.body["max_jacobian_rel_err"] = worst_jac;
  r.check("jacobian_fd", worst_jac <= jac_tol, worst("max relative error", worst_jac, jac_tol));

  // Observational: how well linear adapters at either side of the GLU
  // reproduce a small weight update over a sample.
  const double match_scale = option<double>(cfg, "ft_match_scale", 1e-3);
  Rng mrng(cfg.seed, 0x3A7C4);
  const GluParams p = random_glu(mrng, d, dm, Activation::silu);
  Sequence hs;
  for (std::size_t i = 0; i < cfg.dims.samples; ++i) hs.push_back(random_normal_vector(mrng, d));
  const Matrix dwg = scaled_to_norm(random_normal(mrng, dm, d), match_scale * frobenius_norm(p.w_g));
  const Matrix dwu = scaled_to_norm(random_normal(mrng, dm, d), match_scale * frobenius_norm(p.w_u));
  const Matrix dwd = scaled_to_norm(random_normal(mrng, d, dm), match_scale * frobenius_norm(p.w_d));
  const PostMlpFit fit = ft_match_by_postmlp(p, dwg, dwu, dwd, hs);
  r.body["ft_match"] = {{"scale", match_scale},
                        {"post_mlp_residual", fit.residual},
                        {"pre_mlp_residual", fit.pre_mlp_residual}};
  return r;
}

// ---------------------------------------------------------- principal-angle error

Report theorem1_scan(const ExperimentConfig& cfg) {
  Report r;
  const std::size_t d = cfg.dims.d_model;
  const std::size_t n = cfg.dims.samples;
  const auto trials = option<std::size_t>(cfg, "trials", 100);
  const double y_scale = option<double>(cfg, "y_scale", 0.5);
  const auto gd_trials = option<std::size_t>(cfg, "gd_trials", 3);
  const auto gd_steps = option<std::size_t>(cfg, "gd_steps", 5000);
  const double gap_tol = cfg.tolerance("abs_gap", 1e-8);
  const double gd_tol = cfg.tolerance("gd_gap", 1e-4);

  std::vector<PrincipalAngleReport> reps(trials);
  std::vector<double> gd_err(trials, NAN);
  const Rng root(cfg.seed, 0x7E0A1);
  kernels::omp::for_each_index(trials, [&](std::size_t t) {
    Rng rng = root.split(t);
    const Matrix x = random_normal(rng, d, n);
    const Matrix y = random_normal(rng, d, n, y_scale);
    const Matrix a_p = random_normal(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
    reps[t] = theorem1_error(x, y, a_p, gap_tol);
    if (t >= gd_trials) return;
    const Matrix z = x + y;
    const Matrix target = a_p * x;
    const double tn = frobenius_norm(target);
    const double inv = 1.0 / (tn * tn);
    const double smax = spectral_norm(z);
    GdOptions opts;
    opts.lr = 1.0 / (2.0 * smax * smax * inv);
    opts.steps = gd_steps;
    opts.seed = cfg.seed + t;
    const ObjectiveFn f = [&](const Vector& theta, Vector* grad) {
      const Matrix a(d, d, theta);
      const Matrix res = a * z - target;
      if (grad) {
        const Matrix g = matmul_nt(res, z) * (2.0 * inv);
        grad->assign(g.data().begin(), g.data().end());
      }
      const double rn = frobenius_norm(res);
      return rn * rn * inv;
    };
    gd_err[t] = gradient_descent(f, Vector(d * d, 0.0), opts).final_loss;
  });

  CsvTable t;
  t.header = {"trial",          "predicted_error", "measured_error",   "abs_gap",
              "predicted_error_canonical", "rank_xy", "condition_number", "gd_error"};
  double max_gap = 0.0, max_gd_gap = 0.0;
  bool canonical_below = true;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto& p = reps[i];
    t.add_row({static_cast<double>(i), p.predicted_error, p.measured_error, p.abs_gap,
               p.predicted_error_canonical, static_cast<double>(p.rank_xy), p.condition_number,
               gd_err[i]});
    max_gap = std::max(max_gap, p.abs_gap);
    if (p.predicted_error_canonical > p.predicted_error + gap_tol) canonical_below = false;
    if (i < gd_trials) max_gd_gap = std::max(max_gd_gap, std::abs(gd_err[i] - p.measured_error));
  }
  r.tables["trials"] = std::move(t);
  r.body["trials"] = trials;
  r.body["d"] = d;
  r.body["n"] = n;
  r.body["max_abs_gap"] = max_gap;
  r.body["gd_trials"] = std::min(gd_trials, trials);
  r.body["max_gd_gap"] = max_gd_gap;
  if (trials) r.body["example"] = to_json(reps[0]);
  r.body["example"].erase("optimal_map");
  r.check("predicted_matches_measured", max_gap <= gap_tol, worst("max gap", max_gap, gap_tol));
  r.check("canonical_lower_bound", canonical_below);
  r.check("gd_matches_closed_form", max_gd_gap <= gd_tol, worst("max gap", max_gd_gap, gd_tol));
  return r;
}

// ---------------------------------------------------------------- collapse

Report collapse_sim(const ExperimentConfig& cfg) {
  Report r;
  const std::size_t d = cfg.dims.d_model;
  const auto p = option<std::size_t>(cfg, "features", d);
  const std::size_t n = cfg.dims.samples;
  const auto pairs = option<std::size_t>(cfg, "pairs", 20);
  CollapseOptions base;
  base.steps = option<std::size_t>(cfg, "steps", base.steps);
  base.lr = option<double>(cfg, "lr", base.lr);
  base.orth_rank = option<std::size_t>(cfg, "orth_rank", base.orth_rank);
  base.gram_k = option<std::size_t>(cfg, "gram_k", base.gram_k);
  const double primary = option<double>(cfg, "primary", 0.5);
  const double secondary = option<double>(cfg, "secondary", 0.01);
  const double aligned = cfg.tolerance("aligned_overlap", 0.99);
  const double separated = cfg.tolerance("orth_overlap", 0.05);

  std::vector<CollapseReport> off(pairs), on(pairs);
  const Rng root(cfg.seed, 0xC0117);
  kernels::omp::for_each_index(pairs, [&](std::size_t i) {
    Rng rng = root.split(i);
    const CollapseCase c = make_collapse_case(rng, d, p, n, primary, secondary);
    CollapseOptions o = base;
    o.with_orth = false;
    off[i] = simulate_collapse(c.model, c.target, o);
    o.with_orth = true;
    on[i] = simulate_collapse(c.model, c.target, o);
  });

  CsvTable t;
  t.header = {"pair", "overlap_no_orth", "overlap_orth", "diag_mass_no_orth", "diag_mass_orth",
              "offdiag_mass_no_orth", "offdiag_mass_orth", "final_loss_no_orth",
              "final_loss_orth"};
  double min_off = INFINITY, max_on = 0.0;
  bool mass_ordered = true;
  for (std::size_t i = 0; i < pairs; ++i) {
    t.add_row({static_cast<double>(i), off[i].top_overlap, on[i].top_overlap, off[i].diag_mass,
               on[i].diag_mass, off[i].offdiag_mass, on[i].offdiag_mass, off[i].loss_curve.back(),
               on[i].loss_curve.back()});
    min_off = std::min(min_off, off[i].top_overlap);
    max_on = std::max(max_on, on[i].top_overlap);
    if (!(off[i].diag_mass > on[i].diag_mass)) mass_ordered = false;
  }
  r.tables["pairs"] = std::move(t);
  if (pairs) {
    r.tables["gram_no_orth"] = gram_table(off[0].gram);
    r.tables["gram_orth"] = gram_table(on[0].gram);
    r.tables["loss_no_orth"] = curve_table(off[0].loss_curve);
    r.tables["loss_orth"] = curve_table(on[0].loss_curve);
    r.body["example_no_orth"] = to_json(off[0]);
    r.body["example_orth"] = to_json(on[0]);
  }
  r.body["pairs"] = pairs;
  r.body["min_overlap_no_orth"] = pairs ? Json(min_off) : Json(nullptr);
  r.body["max_overlap_orth"] = max_on;
  r.check("aligned_without_orth", min_off >= aligned, worst("min overlap", min_off, aligned));
  r.check("separated_with_orth", max_on <= separated, worst("max overlap", max_on, separated));
  r.check("diag_mass_drops_with_orth", mass_ordered);
  return r;
}

// ---------------------------------------------------------------- projection

Report orth_projection_demo(const ExperimentConfig& cfg) {
  Report r;
  const std::size_t d = cfg.dims.d_model;
  const auto trials = option<std::size_t>(cfg, "trials", 100);
  const auto steer_rank = option<std::size_t>(cfg, "steer_rank", std::max<std::size_t>(1, d / 2));
  const auto lora_rank = option<std::size_t>(cfg, "lora_rank", std::max<std::size_t>(1, d / 4));
  const double overlap_tol = cfg.tolerance("overlap", 1e-10);
  const double idem_tol = cfg.tolerance("idempotence", 1e-12);
  const double retained_tol = cfg.tolerance("retained_norm", 1e-10);
  const double transfer_tol = cfg.tolerance("transfer", 1e-10);
  if (lora_rank >= d) throw ConfigurationError("options.lora_rank must be below d_model");

  struct Row {
    double overlap_before, overlap_after, idem, norm_before, norm_after, ls_norm, transfer_err;
  };
  std::vector<Row> rows(trials);
  const Rng root(cfg.seed, 0x0A7B0);
  kernels::omp::for_each_index(trials, [&](std::size_t t) {
    Rng rng = root.split(t);
    JointAdapter j;
    j.steer = SteeringAdapter::zeros(Locus::post_block, AdapterKind::bottleneck, d, steer_rank);
    j.steer.w1 = random_normal(rng, steer_rank, d);
    j.steer.w2 = random_normal(rng, d, steer_rank);
    j.wupd.target = WeightTarget::w_d;
    j.wupd.b = random_normal(rng, d, lora_rank);
    j.wupd.a = random_normal(rng, lora_rank, cfg.dims.d_mlp);
    const JointAdapter once = project_orthogonal(j);
    const JointAdapter twice = project_orthogonal(once);
    // Independent route to the retained norm: residual of the best fit of W2
    // by columns of B.
    const Matrix coef = least_squares(j.wupd.b.transposed(), j.steer.w2.transposed());
    const Matrix resid = j.steer.w2 - (j.wupd.b * coef.transposed());

    // Post-block transfer: residual part in span(A), MLP output in span(B).
    const std::size_t ka = d / 2;
    const std::size_t kb = d - ka;
    const Matrix basis = random_orthonormal(rng, d, d);
    const Matrix a = basis.col_block(0, ka);
    const Matrix b = basis.col_block(ka, kb) + 0.5 * (a * random_normal(rng, ka, kb));
    const Matrix a_p = random_normal(rng, d, d);
    const Matrix transfer = projection_transfer(a_p, a, b);
    double err = 0.0;
    for (int s = 0; s < 4; ++s) {
      const Vector res_part = a * random_normal_vector(rng, ka);
      const Vector mlp_part = b * random_normal_vector(rng, kb);
      const Vector got = transfer * add(res_part, mlp_part);
      const Vector want = a_p * mlp_part;
      err = std::max(err, norm2(sub(got, want)) / std::max(1.0, norm2(want)));
    }
    rows[t] = {j.max_normalized_overlap(),
               once.max_normalized_overlap(),
               max_abs_diff(once.steer.w2, twice.steer.w2),
               frobenius_norm(j.steer.w2),
               frobenius_norm(once.steer.w2),
               frobenius_norm(resid),
               err};
  });

  CsvTable tab;
  tab.header = {"trial",       "overlap_before", "overlap_after",  "idempotence_diff",
                "norm_before", "norm_after",     "least_squares_norm", "transfer_rel_err"};
  double worst_overlap = 0.0, worst_idem = 0.0, worst_ret = 0.0, worst_transfer = 0.0;
  bool norm_ok = true;
  for (std::size_t t = 0; t < trials; ++t) {
    const Row& w = rows[t];
    tab.add_row({static_cast<double>(t), w.overlap_before, w.overlap_after, w.idem, w.norm_before,
                 w.norm_after, w.ls_norm, w.transfer_err});
    worst_overlap = std::max(worst_overlap, w.overlap_after);
    worst_idem = std::max(worst_idem, w.idem / std::max(1.0, w.norm_after));
    worst_ret = std::max(worst_ret, w.ls_norm - w.norm_after);
    worst_transfer = std::max(worst_transfer, w.transfer_err);
    if (w.norm_after > w.norm_before * (1.0 + 1e-15)) norm_ok = false;
  }
  r.tables["projection"] = std::move(tab);
  r.body["trials"] = trials;
  r.body["steer_rank"] = steer_rank;
  r.body["lora_rank"] = lora_rank;
  r.body["max_overlap_after"] = worst_overlap;
  r.body["max_idempotence_diff"] = worst_idem;
  r.body["max_transfer_rel_err"] = worst_transfer;
  r.check("overlap_removed", worst_overlap <= overlap_tol, worst("max overlap", worst_overlap, overlap_tol));
  r.check("idempotent", worst_idem <= idem_tol, worst("max diff", worst_idem, idem_tol));
  r.check("norm_not_increased", norm_ok);
  r.check("retains_least_squares_norm", worst_ret <= retained_tol,
          worst("max shortfall", worst_ret, retained_tol));
  r.check("post_block_transfer", worst_transfer <= transfer_tol,
          worst("max relative error", worst_transfer, transfer_tol));

  // Joint training with re-projection after every step.
  Rng rng(cfg.seed, 0x501A7);
  TrainModel base{random_glu(rng, d, cfg.dims.d_mlp, Activation::silu), random_attn(rng, d)};
  const TrainModel goal = perturbed(base, option<double>(cfg, "target_perturbation", 0.1), rng);
  TrainData data;
  for (std::size_t s = 0; s < cfg.dims.samples; ++s) {
    Sequence hs;
    for (std::size_t w = 0; w < cfg.dims.positions; ++w) hs.push_back(random_normal_vector(rng, d));
    data.targets.push_back(block_forward(goal.glu, goal.attn, hs).post_block);
    data.inputs.push_back(std::move(hs));
  }
  TrainConfig tc;
  tc.lr = option<double>(cfg, "train_lr", 0.1);
  tc.steps = option<std::size_t>(cfg, "train_steps", 200);
  tc.trainables = Trainable::joint;
  tc.orth_cadence = OrthCadence::every_step;
  tc.objective = Objective::target_regression;
  tc.seed = cfg.seed;
  const SteeringAdapter s0 = SteeringAdapter::initialized(Locus::post_block, AdapterKind::bottleneck,
                                                          d, steer_rank, Activation::identity, rng);
  const WeightUpdate w0 = WeightUpdate::initialized(WeightTarget::w_d, d, cfg.dims.d_mlp, lora_rank, rng);
  const TrainResult tr = train(tc, base, data, &s0, &w0);
  r.body["joint_training"] = to_json(tr);
  r.tables["joint_loss"] = curve_table(tr.loss_curve);
  r.check("training_overlap_removed", tr.max_orth_overlap <= overlap_tol,
          worst("max overlap", tr.max_orth_overlap, overlap_tol));
  r.check("training_gradients", tr.grad_check_max_rel_err <= cfg.tolerance("grad_check", 1e-5),
          worst("grad check", tr.grad_check_max_rel_err, cfg.tolerance("grad_check", 1e-5)));
  return r;
}

// ---------------------------------------------------------------- bounds

Report bounds_scan(const ExperimentConfig& cfg) {
  Report r;
  BoundScanOptions o;
  o.trials = option<std::size_t>(cfg, "trials", o.trials);
  o.eps_values = option_list(cfg, "eps", o.eps_values);
  o.delta_values = option_list(cfg, "delta", o.delta_values);
  o.max_dim = option<std::size_t>(cfg, "max_dim", std::min<std::size_t>(cfg.dims.d_model * 2, kMaxDModel));
  o.max_mlp = option<std::size_t>(cfg, "max_mlp", cfg.dims.d_mlp * 2);
  o.max_positions = option<std::size_t>(cfg, "max_positions", std::max<std::size_t>(cfg.dims.positions, 6));
  o.min_dim = option<std::size_t>(cfg, "min_dim", o.min_dim);
  if (o.max_mlp > kMaxDMlp) o.max_mlp = kMaxDMlp;
  for (double e : o.eps_values) {
    if (!(e >= 0.0)) throw ConfigurationError("options.eps must be non-negative");
  }
  for (double e : o.delta_values) {
    if (!(e >= 0.0)) throw ConfigurationError("options.delta must be non-negative");
  }
  const bool all_zero =
      std::all_of(o.eps_values.begin(), o.eps_values.end(), [](double x) { return x == 0.0; }) &&
      std::all_of(o.delta_values.begin(), o.delta_values.end(), [](double x) { return x == 0.0; });

  const Lemma lemmas[] = {Lemma::layernorm, Lemma::linear, Lemma::glu_general, Lemma::glu_sigmoid,
                          Lemma::attention};
  CsvTable summary, ratios;
  summary.header = {"lemma_index", "trials", "violations", "max_lhs_over_rhs", "max_lhs"};
  ratios.header = {"trial"};
  std::vector<BoundCheckReport> reps;
  Json lemmas_json = Json::array();
  double max_lhs = 0.0;
  for (std::size_t li = 0; li < 5; ++li) {
    reps.push_back(scan_bound(lemmas[li], cfg.seed, o));
    const auto& b = reps.back();
    ratios.header.push_back(to_string(lemmas[li]));
    summary.add_row({static_cast<double>(li), static_cast<double>(b.trials),
                     static_cast<double>(b.violations), b.max_lhs_over_rhs, b.max_lhs});
    lemmas_json.push_back(to_json(b));
    max_lhs = std::max(max_lhs, b.max_lhs);
    r.check("bound_" + to_string(lemmas[li]), b.violations == 0,
            std::to_string(b.violations) + " violations in " + std::to_string(b.trials) +
                " trials, max ratio " + fmt(b.max_lhs_over_rhs));
    if (lemmas[li] == Lemma::attention) {
      r.check("softmax_sub_bound", b.sub_bound_violations == 0,
              std::to_string(b.sub_bound_violations) + " violations");
    }
  }
  for (std::size_t t = 0; t < o.trials; ++t) {
    Vector row = {static_cast<double>(t)};
    for (const auto& b : reps) row.push_back(b.ratios[t]);
    ratios.add_row(std::move(row));
  }
  r.tables["summary"] = std::move(summary);
  r.tables["ratios"] = std::move(ratios);
  r.body["eps"] = to_json(o.eps_values);
  r.body["delta"] = to_json(o.delta_values);
  r.body["lemmas"] = lemmas_json;
  if (all_zero) r.check("zero_perturbation_zero_lhs", max_lhs == 0.0, "max lhs " + fmt(max_lhs));
  return r;
}

// ---------------------------------------------------------------- oracle fit

struct OraclePair {
  OracleFitResult post_block;
  OracleFitResult post_mlp;
};

OraclePair fit_pair(const TrainModel& base, const TrainModel& ft,
                    const std::vector<Sequence>& inputs, const TrainConfig& tc) {
  AdapterSpec spec;
  spec.kind = AdapterKind::full;
  spec.locus = Locus::post_block;
  OraclePair out{fit_oracle_adapter(base, ft, TraceSite::post_block, spec, inputs, tc), {}};
  spec.locus = Locus::post_mlp;
  out.post_mlp = fit_oracle_adapter(base, ft, TraceSite::post_block, spec, inputs, tc);
  return out;
}

Report oracle_fit(const ExperimentConfig& cfg) {
  Report r;
  const std::size_t d = cfg.dims.d_model;
  const std::size_t dm = cfg.dims.d_mlp;
  const auto pairs = option<std::size_t>(cfg, "pairs", 20);
  const double weight_scale = option<double>(cfg, "weight_scale", 0.1);
  const double perturbation = option<double>(cfg, "perturbation", 1e-2);
  const double max_rel = cfg.tolerance("max_relative_residual", 0.05);
  const double slack = cfg.tolerance("ordering_slack", 0.0);
  TrainConfig tc;
  tc.lr = option<double>(cfg, "lr", 1.0);
  tc.steps = option<std::size_t>(cfg, "steps", 300);
  tc.grad_check_probes = option<std::size_t>(cfg, "grad_check_probes", 16);

  auto make_inputs = [&](Rng& rng, std::size_t positions) {
    std::vector<Sequence> inputs;
    for (std::size_t s = 0; s < cfg.dims.samples; ++s) {
      Sequence hs;
      for (std::size_t w = 0; w < positions; ++w) hs.push_back(on_ln_sphere(rng, d));
      inputs.push_back(std::move(hs));
    }
    return inputs;
  };

  std::vector<OraclePair> fits(pairs);
  const Rng root(cfg.seed, 0x0AC1E);
  kernels::omp::for_each_index(pairs, [&](std::size_t i) {
    Rng rng = root.split(i);
    const TrainModel base{random_glu(rng, d, dm, Activation::silu, weight_scale),
                          random_attn(rng, d, weight_scale)};
    const TrainModel ft = perturbed(base, perturbation, rng);
    TrainConfig local = tc;
    local.seed = cfg.seed + i;
    fits[i] = fit_pair(base, ft, make_inputs(rng, cfg.dims.positions), local);
  });

  CsvTable t;
  t.header = {"pair", "closed_form_post_block", "closed_form_post_mlp", "gd_post_block",
              "gd_post_mlp", "grad_check_post_block", "grad_check_post_mlp"};
  bool ordered = true, gd_ordered = true;
  double worst_pb = 0.0, worst_grad = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto& f = fits[i];
    const double pb = f.post_block.closed_form_residual.value_or(NAN);
    const double pm = f.post_mlp.closed_form_residual.value_or(NAN);
    t.add_row({static_cast<double>(i), pb, pm, f.post_block.relative_residual,
               f.post_mlp.relative_residual, f.post_block.train.grad_check_max_rel_err,
               f.post_mlp.train.grad_check_max_rel_err});
    if (!(pb <= pm + slack)) ordered = false;
    if (!(f.post_block.relative_residual <= f.post_mlp.relative_residual)) gd_ordered = false;
    worst_pb = std::max(worst_pb, std::isnan(pb) ? INFINITY : pb);
    worst_grad = std::max({worst_grad, f.post_block.train.grad_check_max_rel_err,
                           f.post_mlp.train.grad_check_max_rel_err});
  }
  r.tables["pairs"] = std::move(t);
  if (pairs) {
    r.tables["loss_post_block"] = curve_table(fits[0].post_block.train.loss_curve);
    r.tables["loss_post_mlp"] = curve_table(fits[0].post_mlp.train.loss_curve);
    r.body["example_post_block"] = to_json(fits[0].post_block.train);
    r.body["example_post_mlp"] = to_json(fits[0].post_mlp.train);
  }
  r.body["pairs"] = pairs;
  r.body["weight_scale"] = weight_scale;
  r.body["perturbation"] = perturbation;
  r.body["max_post_block_residual"] = worst_pb;
  r.body["gd_ordering_holds"] = gd_ordered;
  r.check("post_block_not_worse", ordered, "closed-form residuals on every pair");
  r.check("post_block_small_residual", worst_pb <= max_rel, worst("max residual", worst_pb, max_rel));
  const double grad_tol = cfg.tolerance("grad_check", 1e-5);
  r.check("adapter_gradients", worst_grad <= grad_tol, worst("grad check", worst_grad, grad_tol));

  // Observational: the same comparison outside the near-linear regime.
  Rng rng(cfg.seed, 0x0AC1F);
  const TrainModel base{random_glu(rng, d, dm, Activation::silu), random_attn(rng, d)};
  const TrainModel ft = perturbed(base, perturbation, rng);
  TrainConfig obs = tc;
  obs.steps = 1;
  const OraclePair unit = fit_pair(base, ft, make_inputs(rng, std::max<std::size_t>(4, cfg.dims.positions)), obs);
  r.body["unit_scale_multi_position"] = {
      {"positions", std::max<std::size_t>(4, cfg.dims.positions)},
      {"closed_form_post_block", unit.post_block.closed_form_residual.value_or(NAN)},
      {"closed_form_post_mlp", unit.post_mlp.closed_form_residual.value_or(NAN)}};
  return r;
}

// ---------------------------------------------------------------- joint 2d

Report joint_2d(const ExperimentConfig& cfg) {
  Report r;
  const auto n = option<std::size_t>(cfg, "grid", cfg.dims.samples);
  const double g1 = option<double>(cfg, "gamma1", 0.3);
  const double g2 = option<double>(cfg, "gamma2", -0.7);
  const Joint2dProblem prob = make_joint_2d(n, g1, g2);
  GdOptions opts;
  opts.steps = option<std::size_t>(cfg, "steps", 20000);
  opts.seed = cfg.seed;
  const double joint_tol = cfg.tolerance("joint_mse", 1e-6);
  const double margin = cfg.tolerance("margin", 10.0);

  struct Run {
    Joint2dMode mode;
    double lr;
  };
  const Run runs[] = {{Joint2dMode::joint, option<double>(cfg, "joint_lr", 3.0)},
                      {Joint2dMode::steering_only, option<double>(cfg, "restricted_lr", 1.0)},
                      {Joint2dMode::ft_only, option<double>(cfg, "restricted_lr", 1.0)}};
  std::vector<Joint2dResult> res;
  CsvTable t;
  t.header = {"mode_index", "final_mse", "family_floor", "grad_check_max_rel_err", "halvings"};
  Json modes = Json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    GdOptions o = opts;
    o.lr = runs[i].lr;
    res.push_back(train_joint_2d(prob, runs[i].mode, o));
    const auto& x = res.back();
    t.add_row({static_cast<double>(i), x.final_mse, x.family_floor, x.gd.grad_check_max_rel_err,
               static_cast<double>(x.gd.halvings)});
    r.tables["loss_" + to_string(x.mode)] = curve_table(x.gd.loss_curve);
    modes.push_back({{"mode", to_string(x.mode)},
                     {"lr", runs[i].lr},
                     {"final_mse", x.final_mse},
                     {"family_floor", x.family_floor},
                     {"halvings", x.gd.halvings},
                     {"final_lr", x.gd.final_lr},
                     {"grad_check_max_rel_err", x.gd.grad_check_max_rel_err},
                     {"dh", to_json(x.dh)},
                     {"dw", to_json(x.dw)}});
  }
  r.tables["summary"] = std::move(t);
  r.body["grid"] = n;
  r.body["gamma"] = {g1, g2};
  r.body["modes"] = modes;
  const double joint_mse = res[0].final_mse;
  const double floor_s = res[1].family_floor, floor_f = res[2].family_floor;
  r.check("joint_reaches_target", joint_mse <= joint_tol, worst("joint mse", joint_mse, joint_tol));
  r.check("steering_only_above_floor", res[1].final_mse >= floor_s * (1.0 - 1e-9),
          worst("steering-only mse", res[1].final_mse, floor_s));
  r.check("ft_only_above_floor", res[2].final_mse >= floor_f * (1.0 - 1e-9),
          worst("ft-only mse", res[2].final_mse, floor_f));
  r.check("joint_beats_floors", margin * joint_mse <= std::min(floor_s, floor_f),
          worst("joint mse x margin", margin * joint_mse, std::min(floor_s, floor_f)));
  return r;
}

// ---------------------------------------------------------------- mlp ratio

Report mlp_ratio(const ExperimentConfig& cfg) {
  Report r;
  const std::size_t d = cfg.dims.d_model;
  const std::size_t dm = cfg.dims.d_mlp;
  const std::size_t m = cfg.dims.positions;
  const auto instances = option<std::size_t>(cfg, "instances", cfg.dims.samples);
  const double perturbation = option<double>(cfg, "perturbation", 1e-2);
  const double tol = cfg.tolerance("identity", 1e-12);

  struct Row {
    Vector ratio;
    Vector coverage;
    double identity_err, norm_err, zero_skip_err, zero_glu_max, scaling_err;
  };
  std::vector<Row> rows(instances);
  const Rng root(cfg.seed, 0x3A710);
  kernels::omp::for_each_index(instances, [&](std::size_t i) {
    Rng rng = root.split(i);
    const TrainModel base{random_glu(rng, d, dm, Activation::silu), random_attn(rng, d)};
    Sequence hs;
    for (std::size_t w = 0; w < m; ++w) hs.push_back(random_normal_vector(rng, d));
    const BlockTrace tr = block_forward(base.glu, base.attn, hs);
    Row row;
    row.ratio = mlp_block_ratio(tr);
    row.identity_err = 0.0;
    row.norm_err = 0.0;
    for (std::size_t w = 0; w < m; ++w) {
      const Vector sum = add(tr.post_attn[w], tr.post_mlp[w]);
      row.identity_err = std::max(row.identity_err, norm2(sub(tr.post_block[w], sum)));
      double num = 0.0, den = 0.0;
      for (double v : tr.post_mlp[w]) num += v * v;
      for (double v : tr.post_block[w]) den += v * v;
      row.norm_err = std::max(row.norm_err, std::abs(row.ratio[w] - std::sqrt(num / den)));
    }
    BlockOptions zs;
    zs.zero_skip = true;
    row.zero_skip_err = 0.0;
    for (double v : mlp_block_ratio(block_forward(base.glu, base.attn, hs, zs))) {
      row.zero_skip_err = std::max(row.zero_skip_err, std::abs(v - 1.0));
    }
    GluParams zero = base.glu;
    zero.w_g = Matrix(dm, d);
    zero.w_u = Matrix(dm, d);
    zero.w_d = Matrix(d, dm);
    row.zero_glu_max = 0.0;
    for (double v : mlp_block_ratio(block_forward(zero, base.attn, hs))) {
      row.zero_glu_max = std::max(row.zero_glu_max, std::abs(v));
    }
    GluParams tripled = base.glu;
    tripled.w_d *= 3.0;
    const BlockTrace t3 = block_forward(tripled, base.attn, hs);
    row.scaling_err = 0.0;
    for (std::size_t w = 0; w < m; ++w) {
      const Vector want = scaled(tr.post_mlp[w], 3.0);
      row.scaling_err = std::max(row.scaling_err,
                                 norm2(sub(t3.post_mlp[w], want)) / std::max(1.0, norm2(want)));
    }
    const TrainModel ft = perturbed(base, perturbation, rng);
    const BlockTrace tf = block_forward(ft.glu, ft.attn, hs);
    for (std::size_t w = 0; w < m; ++w) {
      const double dmlp = norm2(sub(tf.post_mlp[w], tr.post_mlp[w]));
      const double dblock = norm2(sub(tf.post_block[w], tr.post_block[w]));
      row.coverage.push_back(dblock == 0.0 ? NAN : dmlp / dblock);
    }
    rows[i] = std::move(row);
  });

  CsvTable t;
  t.header = {"instance", "position", "mlp_block_ratio", "ft_change_covered_by_mlp"};
  double id_err = 0.0, norm_err = 0.0, zs_err = 0.0, zg = 0.0, sc = 0.0;
  Vector all_cov;
  for (std::size_t i = 0; i < instances; ++i) {
    const Row& w = rows[i];
    for (std::size_t p = 0; p < m; ++p) {
      t.add_row({static_cast<double>(i), static_cast<double>(p), w.ratio[p], w.coverage[p]});
      all_cov.push_back(w.coverage[p]);
    }
    id_err = std::max(id_err, w.identity_err);
    norm_err = std::max(norm_err, w.norm_err);
    zs_err = std::max(zs_err, w.zero_skip_err);
    zg = std::max(zg, w.zero_glu_max);
    sc = std::max(sc, w.scaling_err);
  }
  r.tables["ratios"] = std::move(t);
  r.body["instances"] = instances;
  r.body["positions"] = m;
  r.body["mean_ft_change_covered_by_mlp"] = all_cov.empty() ? Json(nullptr) : Json(mean(all_cov));
  r.check("trace_identity", id_err <= tol, worst("max error", id_err, tol));
  r.check("ratio_matches_norms", norm_err <= tol, worst("max error", norm_err, tol));
  r.check("zero_skip_ratio_one", zs_err <= tol, worst("max error", zs_err, tol));
  r.check("zero_glu_ratio_zero", zg == 0.0, "max ratio " + fmt(zg));
  r.check("w_d_scaling_linear", sc <= tol, worst("max relative error", sc, tol));
  return r;
}

}  // namespace

const std::vector<ExperimentInfo>& experiment_registry() {
  static const std::vector<ExperimentInfo> registry = {
      {"firstorder-slopes", "first-order residual slopes and Jacobian checks", firstorder_slopes},
      {"theorem1-scan", "post-block vs post-MLP optimal linear error", theorem1_scan},
      {"collapse-sim", "joint training collapse with and without orthogonality", collapse_sim},
      {"orth-projection-demo", "orthogonality projection and post-block transfer", orth_projection_demo},
      {"bounds-scan", "error-propagation bounds on random instances", bounds_scan},
      {"oracle-fit", "linear adapters fitted to fine-tuning oracles", oracle_fit},
      {"joint-2d", "two-dimensional joint expressivity example", joint_2d},
      {"mlp-ratio", "MLP share of the block output", mlp_ratio},
  };
  return registry;
}

const ExperimentInfo* find_experiment(const std::string& name) {
  for (const auto& e : experiment_registry()) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome out;
  try {
    validate_config(cfg);
    Report rep = find_experiment(cfg.experiment)->run(cfg);
    rep.experiment = cfg.experiment;
    rep.seed = cfg.seed;
    rep.config = cfg.echo();
    out.files = emit_report(rep, cfg.output_dir);
    out.failing_check = rep.first_failure();
    out.exit_code = out.failing_check.empty() ? kExitOk : kExitInvariant;
    out.report = std::move(rep);
  } catch (const ConfigurationError& e) {
    out.exit_code = kExitConfig;
    out.message = e.what();
  } catch (const IoError& e) {
    out.exit_code = kExitIo;
    out.message = e.what();
  } catch (const std::exception& e) {
    out.exit_code = kExitInternal;
    out.message = e.what();
  }
  return out;
}

}  // namespace steerkit
