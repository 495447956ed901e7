#include <algorithm>
#include <cmath>
#include <limits>

#include "steerkit/errors.hpp"
#include "steerkit/trainer.hpp"

namespace steerkit {

double grad_check(const ObjectiveFn& f, const Vector& theta, std::size_t probe_count, Rng& rng,
                  double step) {
  if (theta.empty() || probe_count == 0) return 0.0;
  Vector g(theta.size(), 0.0);
  f(theta, &g);
  Vector probe = theta;
  double worst = 0.0;
  // Every coordinate when the budget allows it, otherwise a random sample.
  const bool all = probe_count >= theta.size();
  const std::size_t count = all ? theta.size() : probe_count;
  for (std::size_t p = 0; p < count; ++p) {
    const std::size_t i = all ? p : static_cast<std::size_t>(rng.uniform_int(0, theta.size() - 1));
    probe[i] = theta[i] + step;
    const double up = f(probe, nullptr);
    probe[i] = theta[i] - step;
    const double down = f(probe, nullptr);
    probe[i] = theta[i];
    const double fd = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(g[i]), std::abs(fd), 1.0});
    worst = std::max(worst, std::abs(g[i] - fd) / scale);
  }
  return worst;
}

Vector decimate(const Vector& curve, std::size_t max_points) {
  if (curve.size() <= max_points || max_points < 2) return curve;
  Vector out(max_points);
  const std::size_t last = curve.size() - 1;
  for (std::size_t i = 0; i < max_points; ++i) out[i] = curve[i * last / (max_points - 1)];
  return out;
}

GdResult gradient_descent(const ObjectiveFn& f, Vector theta, const GdOptions& opts) {
  if (!(opts.lr > 0.0)) throw ConfigurationError("gradient_descent: lr must be positive");
  if (opts.steps == 0) throw ConfigurationError("gradient_descent: steps must be >= 1");

  GdResult r;
  Rng probe_rng(opts.seed, 0x6C4ECCULL);
  r.grad_check_max_rel_err = grad_check(f, theta, opts.grad_check_probes, probe_rng);

  Vector g(theta.size(), 0.0);
  double loss = f(theta, &g);
  if (!std::isfinite(loss)) throw DivergenceError("gradient_descent: non-finite loss", 0);
  r.initial_loss = loss;
  Vector curve{loss};
  Vector best = theta;
  double best_loss = loss;
  double lr = opts.lr;
  std::size_t increases = 0;

  std::size_t step = 0;
  for (; step < opts.steps && loss > opts.target_loss; ++step) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
    if (opts.after_step) opts.after_step(theta);
    const double next = f(theta, &g);
    if (!std::isfinite(next)) throw DivergenceError("gradient_descent: non-finite loss", step + 1);
    curve.push_back(next);
    increases = next > loss ? increases + 1 : 0;
    loss = next;
    if (loss < best_loss) {
      best_loss = loss;
      best = theta;
    }
    if (increases >= opts.halving_patience && r.halvings < opts.max_halvings) {
      lr *= 0.5;
      ++r.halvings;
      increases = 0;
      theta = best;
      loss = f(theta, &g);
    }
  }
  r.steps_run = step;
  r.final_lr = lr;
  r.final_loss = loss;
  r.theta = std::move(theta);
  r.loss_curve = decimate(curve, opts.max_curve_points);
  return r;
}

std::string to_string(Objective o) {
  return o == Objective::oracle_match ? "oracle_match" : "target_regression";
}

std::string to_string(Trainable t) {
  switch (t) {
    case Trainable::steering: return "steering";
    case Trainable::weight: return "weight";
    case Trainable::joint: return "joint";
  }
  return "steering";
}

std::string to_string(OrthCadence c) { return c == OrthCadence::every_step ? "every_step" : "never"; }

BlockObjective::BlockObjective(const TrainConfig& cfg, const TrainModel& model,
                               const TrainData& data, const SteeringAdapter* steer,
                               const WeightUpdate* wupd)
    : cfg_(cfg), model_(model) {
  if (data.inputs.empty()) throw PreconditionError("train: empty data");
  if (data.inputs.size() != data.targets.size()) {
    throw DimensionError("train: inputs and targets differ in sample count");
  }
  if (cfg.site != TraceSite::post_block && cfg.site != TraceSite::post_mlp) {
    throw ConfigurationError("train: objective site must be post_block or post_mlp");
  }
  model_.glu.validate();
  model_.attn.validate();
  if (steer) {
    steer->validate();
    if (steer->dim() != model.glu.d_model()) throw DimensionError("train: adapter width");
    if (cfg.site == TraceSite::post_mlp && steer->locus == Locus::post_block) {
      throw ConfigurationError("train: a post_block adapter cannot move the post_mlp site");
    }
    steer_ = *steer;
  }
  if (wupd) {
    apply_weight_update(model.glu, *wupd);  // shape check
    wupd_ = *wupd;
  }
  for (std::size_t s = 0; s < data.inputs.size(); ++s) {
    const BlockTrace base = block_forward(model.glu, model.attn, data.inputs[s], cfg.block);
    if (data.targets[s].size() != base.positions()) {
      throw DimensionError("train: target position count mismatch");
    }
    const Sequence& site = site_values(base, cfg.site);
    for (std::size_t w = 0; w < base.positions(); ++w) {
      post_attn_.push_back(base.post_attn[w]);
      target_.push_back(cfg.objective == Objective::oracle_match ? add(site[w], data.targets[s][w])
                                                                 : data.targets[s][w]);
    }
  }
  if (cfg.block.zero_skip) throw ConfigurationError("train: zero_skip mode is diagnostic only");
}

std::size_t BlockObjective::param_count() const {
  std::size_t n = steer_ ? steer_->param_count() : 0;
  if (wupd_) n += wupd_->b.size() + wupd_->a.size();
  return n;
}

Vector BlockObjective::pack(const SteeringAdapter* steer, const WeightUpdate* wupd) const {
  Vector theta;
  if (steer_) theta = steer->flatten();
  if (wupd_) {
    theta.insert(theta.end(), wupd->b.data().begin(), wupd->b.data().end());
    theta.insert(theta.end(), wupd->a.data().begin(), wupd->a.data().end());
  }
  return theta;
}

void BlockObjective::unpack(const Vector& theta, SteeringAdapter* steer, WeightUpdate* wupd) const {
  if (theta.size() != param_count()) throw DimensionError("train: parameter vector size");
  std::size_t at = 0;
  if (steer_) {
    *steer = *steer_;
    const std::size_t n = steer_->param_count();
    steer->unflatten(Vector(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(n)));
    at = n;
  }
  if (wupd_) {
    *wupd = *wupd_;
    for (double& x : wupd->b.data()) x = theta[at++];
    for (double& x : wupd->a.data()) x = theta[at++];
  }
}

double BlockObjective::operator()(const Vector& theta, Vector* grad) const {
  SteeringAdapter ad;
  WeightUpdate wu;
  unpack(theta, &ad, &wu);
  const bool has_ad = steer_.has_value();
  const GluParams glu = wupd_ ? apply_weight_update(model_.glu, wu) : model_.glu;
  const std::size_t d = glu.d_model();
  const double norm = 1.0 / static_cast<double>(post_attn_.size() * d);

  const std::size_t n_ad = has_ad ? ad.param_count() : 0;
  Matrix g_weight;
  if (grad) {
    grad->assign(theta.size(), 0.0);
    if (wupd_) g_weight = Matrix(target_weight(glu, wu.target).rows(),
                                 target_weight(glu, wu.target).cols());
  }
  std::span<double> g_ad = grad ? std::span<double>(grad->data(), n_ad) : std::span<double>();

  double loss = 0.0;
  for (std::size_t w = 0; w < post_attn_.size(); ++w) {
    const Vector& u = post_attn_[w];
    const Vector x0 = cfg_.block.inner_layernorm ? layernorm(u) : u;
    const bool pre = has_ad && ad.locus == Locus::pre_mlp;
    const bool mid = has_ad && ad.locus == Locus::post_mlp;
    const bool post = has_ad && ad.locus == Locus::post_block;
    const Vector x = pre ? apply_steering(ad, x0) : x0;
    const GluState s = glu_state(glu, x);
    const Vector y = mid ? apply_steering(ad, s.out) : s.out;
    Vector out;
    Vector z0;
    if (cfg_.site == TraceSite::post_mlp) {
      out = y;
    } else {
      z0 = add(u, y);
      out = post ? apply_steering(ad, z0) : z0;
    }
    const Vector r = sub(out, target_[w]);
    loss += dot(r, r) * norm;
    if (!grad) continue;

    Vector e = scaled(r, 2.0 * norm);
    if (post) e = steering_backward(ad, z0, e, g_ad);
    if (mid) e = steering_backward(ad, s.out, e, g_ad);
    if (!pre && !wupd_) continue;

    // GLU reverse mode at x with upstream e.
    const std::size_t k = glu.d_mlp();
    const Vector dm = matvec_t(glu.w_d, e);
    Vector dag(k), dau(k);
    for (std::size_t i = 0; i < k; ++i) {
      dag[i] = dm[i] * s.a_u[i] * activate_derivative(glu.phi, s.a_g[i]);
      dau[i] = dm[i] * activate(glu.phi, s.a_g[i]);
    }
    if (wupd_) {
      switch (wu.target) {
        case WeightTarget::w_d: g_weight += outer(e, s.m); break;
        case WeightTarget::w_g: g_weight += outer(dag, x); break;
        case WeightTarget::w_u: g_weight += outer(dau, x); break;
      }
    }
    if (pre) {
      const Vector dx = add(matvec_t(glu.w_g, dag), matvec_t(glu.w_u, dau));
      steering_backward(ad, x0, dx, g_ad);
    }
  }

  if (grad && wupd_) {
    const Matrix db = matmul_nt(g_weight, wu.a) * wu.scale;
    const Matrix da = matmul_tn(wu.b, g_weight) * wu.scale;
    std::size_t at = n_ad;
    for (double x : db.data()) (*grad)[at++] = x;
    for (double x : da.data()) (*grad)[at++] = x;
  }
  return loss;
}

TrainResult train(const TrainConfig& cfg, const TrainModel& model, const TrainData& data,
                  const SteeringAdapter* steer_init, const WeightUpdate* wupd_init) {
  const bool want_steer = cfg.trainables != Trainable::weight;
  const bool want_wupd = cfg.trainables != Trainable::steering;
  if (want_steer && !steer_init) throw ConfigurationError("train: steering adapter required");
  if (want_wupd && !wupd_init) throw ConfigurationError("train: weight update required");
  const SteeringAdapter* steer = want_steer ? steer_init : nullptr;
  const WeightUpdate* wupd = want_wupd ? wupd_init : nullptr;

  const bool orth = cfg.orth_cadence == OrthCadence::every_step;
  if (orth) {
    if (cfg.trainables != Trainable::joint) {
      throw ConfigurationError("train: every_step orthogonality needs joint trainables");
    }
    if (steer->kind != AdapterKind::bottleneck || steer->locus != Locus::post_block) {
      throw ConfigurationError("train: joint orthogonality needs a post_block bottleneck adapter");
    }
  }

  const BlockObjective obj(cfg, model, data, steer, wupd);
  TrainResult res;
  res.config = cfg;
  res.has_steer = want_steer;
  res.has_wupd = want_wupd;

  GdOptions gd;
  gd.lr = cfg.lr;
  gd.steps = cfg.steps;
  gd.seed = cfg.seed;
  gd.target_loss = cfg.target_loss;
  gd.grad_check_probes = cfg.grad_check_probes;
  double worst_overlap = 0.0;
  if (orth) {
    gd.after_step = [&](Vector& theta) {
      JointAdapter j;
      obj.unpack(theta, &j.steer, &j.wupd);
      j = project_orthogonal(j);
      worst_overlap = std::max(worst_overlap, j.max_normalized_overlap());
      theta = obj.pack(&j.steer, &j.wupd);
    };
  }
  Vector theta0 = obj.pack(steer, wupd);
  if (orth) gd.after_step(theta0);

  const ObjectiveFn f = [&obj](const Vector& t, Vector* g) { return obj(t, g); };
  const GdResult r = gradient_descent(f, std::move(theta0), gd);
  obj.unpack(r.theta, &res.steer, &res.wupd);
  res.loss_curve = r.loss_curve;
  res.grad_check_max_rel_err = r.grad_check_max_rel_err;
  res.initial_loss = r.initial_loss;
  res.final_loss = r.final_loss;
  res.halvings = r.halvings;
  res.final_lr = r.final_lr;
  res.steps_run = r.steps_run;
  res.max_orth_overlap = worst_overlap;
  return res;
}

}  // namespace steerkit
