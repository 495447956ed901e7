#include <cmath>

#include "steerkit/errors.hpp"
#include "steerkit/trainer.hpp"

namespace steerkit {
namespace {

double sum_sq(const Sequence& s) {
  double acc = 0.0;
  for (const auto& v : s) acc += dot(v, v);
  return acc;
}

Matrix as_columns(const Sequence& s) { return Matrix::from_columns(s); }

}  // namespace

OracleFitResult fit_oracle_adapter(const TrainModel& base, const TrainModel& ft, TraceSite site,
                                   const AdapterSpec& spec, const std::vector<Sequence>& inputs,
                                   const TrainConfig& cfg_in) {
  if (inputs.empty()) throw PreconditionError("fit_oracle_adapter: empty data");
  TrainConfig cfg = cfg_in;
  cfg.objective = Objective::oracle_match;
  cfg.trainables = Trainable::steering;
  cfg.orth_cadence = OrthCadence::never;
  cfg.site = site;

  OracleFitResult out;
  out.oracle.site = site;
  TrainData data;
  Sequence locus_values;  // base values at the adapter locus, all positions
  for (const auto& hs : inputs) {
    const BlockTrace tb = block_forward(base.glu, base.attn, hs, cfg.block);
    const BlockTrace tf = block_forward(ft.glu, ft.attn, hs, cfg.block);
    OracleTarget o = compute_oracle(tb, tf, site);
    out.oracle.delta.insert(out.oracle.delta.end(), o.delta.begin(), o.delta.end());
    data.inputs.push_back(hs);
    data.targets.push_back(std::move(o.delta));
    const Sequence& at = spec.locus == Locus::post_block ? tb.post_block
                         : spec.locus == Locus::post_mlp ? tb.post_mlp
                                                         : tb.mlp_in;
    locus_values.insert(locus_values.end(), at.begin(), at.end());
  }

  Rng rng(cfg.seed, 0xADA97ULL);
  const SteeringAdapter init = SteeringAdapter::initialized(
      spec.locus, spec.kind, base.glu.d_model(), spec.rank, spec.phi, rng);
  out.train = train(cfg, base, data, &init, nullptr);

  // Residual of the trained adapter at the oracle site.
  const double oracle_sq = sum_sq(out.oracle.delta);
  double resid_sq = 0.0;
  std::size_t at = 0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const BlockTrace tb = block_forward(base.glu, base.attn, inputs[s], cfg.block);
    const BlockTrace ts = steered_block_forward(base.glu, base.attn, {out.train.steer}, {},
                                                inputs[s], cfg.block);
    const Sequence& b = site_values(tb, site);
    const Sequence& v = site_values(ts, site);
    for (std::size_t w = 0; w < b.size(); ++w, ++at) {
      const Vector diff = sub(sub(v[w], b[w]), out.oracle.delta[at]);
      resid_sq += dot(diff, diff);
    }
  }
  out.relative_residual = oracle_sq == 0.0 ? (resid_sq == 0.0 ? 0.0 : INFINITY)
                                           : std::sqrt(resid_sq / oracle_sq);

  const bool linear_full = spec.kind == AdapterKind::full && spec.locus != Locus::pre_mlp;
  if (linear_full && oracle_sq > 0.0) {
    const Matrix reg = as_columns(locus_values);
    const Matrix tgt = as_columns(out.oracle.delta);
    const Matrix m = least_squares(reg, tgt);
    out.closed_form_residual = frobenius_norm(m * reg - tgt) / std::sqrt(oracle_sq);
  } else if (linear_full) {
    out.closed_form_residual = 0.0;
  }
  return out;
}

Joint2dProblem make_joint_2d(std::size_t n, double gamma1, double gamma2) {
  if (n < 2) throw PreconditionError("make_joint_2d: need at least two grid points");
  Joint2dProblem p;
  p.model.x = Matrix(2, n);
  p.model.f = Matrix(2, n);
  p.model.w = Matrix::identity(2);
  p.target = Matrix(2, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    const double r = t > 0.0 ? t : 0.0;
    p.model.x(0, i) = t;
    p.model.f(0, i) = r;
    p.target(0, i) = gamma1 * t + gamma2 * r;
  }
  return p;
}

std::string to_string(Joint2dMode m) {
  switch (m) {
    case Joint2dMode::joint: return "joint";
    case Joint2dMode::steering_only: return "steering_only";
    case Joint2dMode::ft_only: return "ft_only";
  }
  return "joint";
}

Joint2dResult train_joint_2d(const Joint2dProblem& prob, Joint2dMode mode, const GdOptions& opts) {
  prob.model.validate();
  const std::size_t d = prob.model.dim();
  const std::size_t p = prob.model.features();
  const bool use_dh = mode != Joint2dMode::ft_only;
  const bool use_dw = mode != Joint2dMode::steering_only;
  const std::size_t nh = use_dh ? d * d : 0;
  const std::size_t nw = use_dw ? d * p : 0;
  const double inv_n = 1.0 / static_cast<double>(prob.model.samples());

  auto split = [&](const Vector& theta, Matrix& dh, Matrix& dw) {
    dh = Matrix(d, d);
    dw = Matrix(d, p);
    for (std::size_t i = 0; i < nh; ++i) dh.data()[i] = theta[i];
    for (std::size_t i = 0; i < nw; ++i) dw.data()[i] = theta[nh + i];
  };
  const ObjectiveFn f = [&](const Vector& theta, Vector* grad) {
    Matrix dh, dw;
    split(theta, dh, dw);
    const FeatureEval e = evaluate_feature_model(prob.model, prob.target, dh, dw);
    if (grad) {
      grad->assign(theta.size(), 0.0);
      for (std::size_t i = 0; i < nh; ++i) (*grad)[i] = e.grad_dh.data()[i] * inv_n;
      for (std::size_t i = 0; i < nw; ++i) (*grad)[nh + i] = e.grad_dw.data()[i] * inv_n;
    }
    // ||R||^2 / (d n) with d = 2 equals (0.5 ||R||^2) / n.
    return e.loss * 2.0 * inv_n / static_cast<double>(d);
  };
  if (d != 2) throw PreconditionError("train_joint_2d: problem must be two-dimensional");

  Joint2dResult r;
  r.mode = mode;
  r.gd = gradient_descent(f, Vector(nh + nw, 0.0), opts);
  split(r.gd.theta, r.dh, r.dw);
  r.final_mse = r.gd.final_loss;
  r.family_floor = mode == Joint2dMode::joint ? 0.0 : joint_2d_floor(prob, mode);
  return r;
}

double joint_2d_floor(const Joint2dProblem& prob, Joint2dMode mode) {
  const double denom = static_cast<double>(prob.target.size());
  switch (mode) {
    case Joint2dMode::joint: return 0.0;
    case Joint2dMode::steering_only: {
      // (I + dh) (X + F): any linear map of X + F.
      const Matrix s = prob.model.base_output();
      const Matrix m = least_squares(s, prob.target);
      const double r = frobenius_norm(m * s - prob.target);
      return r * r / denom;
    }
    case Joint2dMode::ft_only: {
      // X + (W + dW) F: any linear map of F added to X.
      const Matrix goal = prob.target - prob.model.x;
      const Matrix m = least_squares(prob.model.f, goal);
      const double r = frobenius_norm(m * prob.model.f - goal);
      return r * r / denom;
    }
  }
  return 0.0;
}

}  // namespace steerkit
