#include "steerkit/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "steerkit/errors.hpp"
#include "steerkit/kernels.hpp"
#include "steerkit/random.hpp"

namespace steerkit {
namespace {

double min_std(const Vector& a, const Vector& b) {
  const double s = std::min(population_std(a), population_std(b));
  if (!(s > kMinLayerNormStd)) throw DegenerateInputError("bound: constant input to LayerNorm");
  return s;
}

double sqrt_of(std::size_t n) { return std::sqrt(static_cast<double>(n)); }

Vector phi_of(Activation phi, Vector a) {
  for (double& x : a) x = activate(phi, x);
  return a;
}

Vector glu_skip(const GluParams& p, const Vector& h) { return add(h, glu_forward(p, layernorm(h))); }

// Logits q_w . k_i / sqrt(n) of query w against every key.
Vector attention_logits(const AttnParams& p, const Sequence& hs, std::size_t w) {
  const std::size_t n = p.d_model();
  const Vector q = p.w_q * layernorm(hs[w]);
  Vector z(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) z[i] = dot(q, p.w_k * layernorm(hs[i])) / sqrt_of(n);
  return z;
}

// ---- random instance builders for the scans ----

Matrix perturb_spectral(Rng& rng, const Matrix& w, double delta) {
  Matrix e = random_normal(rng, w.rows(), w.cols());
  const double s = spectral_norm(e);
  e *= delta * rng.uniform(0.25, 1.0) / s;
  return w + e;
}

Vector perturb_ball(Rng& rng, const Vector& h, double eps) {
  return add(h, scaled(random_unit_vector(rng, h.size()), eps * rng.uniform(0.0, 1.0)));
}

// h' on the sphere of radius sqrt(n) with chord ||h - h'|| <= eps.
Vector perturb_sphere(Rng& rng, const Vector& h, double eps) {
  const double r = norm2(h);
  Vector t = random_normal_vector(rng, h.size());
  axpy(-dot(t, h) / (r * r), h, t);
  t = scaled(t, 1.0 / norm2(t));
  const double chord = eps * rng.uniform(0.0, 1.0);
  const double alpha = 2.0 * std::asin(std::min(1.0, chord / (2.0 * r)));
  return add(scaled(h, std::cos(alpha)), scaled(t, r * std::sin(alpha)));
}

GluParams perturb_glu(Rng& rng, const GluParams& p, double delta) {
  GluParams q = p;
  q.w_g = perturb_spectral(rng, p.w_g, delta);
  q.w_u = perturb_spectral(rng, p.w_u, delta);
  q.w_d = perturb_spectral(rng, p.w_d, delta);
  return q;
}

struct Trial {
  double lhs = 0.0;
  double ratio = 0.0;
  bool violated = false;
  bool statement_violated = false;
  bool sub_violated = false;
  double statement_ratio = 0.0;
};

Trial run_trial(Lemma lemma, Rng rng, const BoundScanOptions& o) {
  const double eps = o.eps_values[rng.uniform_int(0, o.eps_values.size() - 1)];
  const double delta = o.delta_values[rng.uniform_int(0, o.delta_values.size() - 1)];
  const std::size_t n = rng.uniform_int(o.min_dim, o.max_dim);
  Trial t;
  BoundValue b;
  switch (lemma) {
    case Lemma::layernorm: {
      const Vector h = random_normal_vector(rng, n, rng.uniform(0.1, 3.0));
      b = layernorm_bound(h, perturb_ball(rng, h, eps), eps);
      break;
    }
    case Lemma::linear: {
      const std::size_t out = rng.uniform_int(o.min_dim, o.max_dim);
      Vector h = random_unit_vector(rng, n);
      h = scaled(h, sqrt_of(n));
      const Matrix w = random_normal(rng, out, n, 1.0 / sqrt_of(n));
      b = linear_bound(w, perturb_spectral(rng, w, delta), h, perturb_sphere(rng, h, eps), eps,
                       delta);
      break;
    }
    case Lemma::glu_general:
    case Lemma::glu_sigmoid: {
      const std::size_t k = rng.uniform_int(2, o.max_mlp);
      Activation phi = Activation::sigmoid;
      if (lemma == Lemma::glu_general) {
        static constexpr Activation kAll[] = {Activation::sigmoid, Activation::silu,
                                              Activation::relu, Activation::identity};
        phi = kAll[rng.uniform_int(0, 3)];
      }
      const GluParams p = random_glu(rng, n, k, phi);
      const GluParams q = perturb_glu(rng, p, delta);
      const Vector h = random_normal_vector(rng, n);
      const Vector h2 = perturb_ball(rng, h, eps);
      b = lemma == Lemma::glu_sigmoid
              ? glu_sigmoid_bound(p, q, h, h2, eps, delta)
              : glu_bound(p, q, h, h2, eps, delta, lipschitz_constant(phi), output_bound(phi));
      break;
    }
    case Lemma::attention: {
      const std::size_t m = rng.uniform_int(1, o.max_positions);
      const AttnParams p = random_attn(rng, n);
      AttnParams q = p;
      q.w_q = perturb_spectral(rng, p.w_q, delta);
      q.w_k = perturb_spectral(rng, p.w_k, delta);
      q.w_v = perturb_spectral(rng, p.w_v, delta);
      Sequence hs(m), hs2(m);
      for (std::size_t i = 0; i < m; ++i) {
        hs[i] = random_normal_vector(rng, n);
        hs2[i] = perturb_ball(rng, hs[i], eps);
      }
      const AttentionBound ab = attention_bound(p, q, hs, hs2, eps, delta);
      b = ab.composite;
      t.statement_violated = ab.statement.violated();
      t.statement_ratio = ab.statement.ratio();
      t.sub_violated = ab.softmax.violated();
      break;
    }
  }
  t.lhs = b.lhs;
  t.ratio = b.ratio();
  t.violated = b.violated();
  return t;
}

}  // namespace

std::string to_string(Lemma lemma) {
  switch (lemma) {
    case Lemma::layernorm: return "layernorm";
    case Lemma::linear: return "linear";
    case Lemma::glu_general: return "glu_general";
    case Lemma::glu_sigmoid: return "glu_sigmoid";
    case Lemma::attention: return "attention";
  }
  return "layernorm";
}

Lemma lemma_from_string(const std::string& name) {
  for (Lemma l : {Lemma::layernorm, Lemma::linear, Lemma::glu_general, Lemma::glu_sigmoid,
                  Lemma::attention}) {
    if (to_string(l) == name) return l;
  }
  throw ConfigurationError("unknown lemma '" + name + "'");
}

double BoundValue::ratio() const {
  if (lhs == 0.0) return 0.0;
  if (rhs == 0.0) return kInfiniteBound;
  return lhs / rhs;
}

BoundValue layernorm_bound(const Vector& h, const Vector& h_prime, double eps) {
  if (h.size() != h_prime.size()) throw DimensionError("layernorm_bound: length mismatch");
  const double s = min_std(h, h_prime);
  return {norm2(sub(layernorm(h), layernorm(h_prime))), eps / s};
}

BoundValue linear_bound(const Matrix& w, const Matrix& w_prime, const Vector& h,
                        const Vector& h_prime, double eps, double delta) {
  const std::size_t n = h.size();
  const double root_n = sqrt_of(n);
  for (const Vector* v : {&h, &h_prime}) {
    if (std::abs(norm2(*v) - root_n) > 1e-9 * root_n) {
      throw PreconditionError("linear_bound: inputs must have norm sqrt(n)");
    }
  }
  return {norm2(sub(w * h, w_prime * h_prime)), spectral_norm(w) * eps + root_n * delta};
}

BoundValue glu_bound(const GluParams& p, const GluParams& q, const Vector& h, const Vector& h2,
                     double eps, double delta, double lipschitz, double bound_b) {
  const std::size_t n = h.size();
  if (p.d_model() != n || q.d_model() != n || h2.size() != n) {
    throw DimensionError("glu_bound: shape mismatch");
  }
  const double s = min_std(h, h2);
  const double root_n = sqrt_of(n);
  const double wg = spectral_norm(p.w_g);
  const double wu = spectral_norm(p.w_u);
  const double wd = spectral_norm(p.w_d);
  const double wu2 = spectral_norm(q.w_u);
  const double gate2 = norm2(phi_of(q.phi, q.w_g * layernorm(h2)));
  const double gate_cap = std::min(bound_b, gate2);

  const double gate_shift = std::min(2.0 * bound_b, lipschitz * (wg * eps / s + root_n * delta));
  const double rhs = eps + root_n * wd * wu * gate_shift +
                     wd * (wu * eps / s + root_n * delta) * gate_cap +
                     root_n * wu2 * delta * gate_cap;
  return {norm2(sub(glu_skip(p, h), glu_skip(q, h2))), rhs};
}

BoundValue glu_sigmoid_bound(const GluParams& p, const GluParams& q, const Vector& h,
                             const Vector& h2, double eps, double delta) {
  if (p.phi != Activation::sigmoid || q.phi != Activation::sigmoid) {
    throw PreconditionError("glu_sigmoid_bound: phi must be sigmoid");
  }
  const std::size_t n = h.size();
  if (p.d_model() != n || q.d_model() != n || h2.size() != n) {
    throw DimensionError("glu_sigmoid_bound: shape mismatch");
  }
  const double s = min_std(h, h2);
  const double root_n = sqrt_of(n);
  const double wg = spectral_norm(p.w_g);
  const double wu = spectral_norm(p.w_u);
  const double wd = spectral_norm(p.w_d);
  const double wu2 = spectral_norm(q.w_u);
  const double rhs = eps + (wd * wu * eps / s) * (root_n / 4.0 * wg + 1.0) +
                     root_n * delta * (root_n / 4.0 * wd * wu + wd + root_n * wu2);
  return {norm2(sub(glu_skip(p, h), glu_skip(q, h2))), rhs};
}

AttentionBound attention_bound(const AttnParams& p, const AttnParams& q, const Sequence& hs,
                               const Sequence& hs2, double eps, double delta,
                               std::size_t position) {
  const std::size_t m = hs.size();
  if (m == 0 || hs2.size() != m) throw DimensionError("attention_bound: sequence lengths");
  const std::size_t w = position == SIZE_MAX ? m - 1 : position;
  if (w >= m) throw DimensionError("attention_bound: position out of range");
  const std::size_t n = p.d_model();

  AttentionBound out;
  out.s = kInfiniteBound;
  for (std::size_t i = 0; i < m; ++i) out.s = std::min(out.s, min_std(hs[i], hs2[i]));
  const double s = out.s;

  const double lhs = norm2(sub(attn_forward(p, hs)[w], attn_forward(q, hs2)[w]));
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  const double wv = spectral_norm(p.w_v);
  const double wq = spectral_norm(p.w_q);
  const double wq2 = spectral_norm(q.w_q);
  const double wk = spectral_norm(p.w_k);

  const double composite = eps + wv * (md * nd * eps / (2.0 * s)) * (wq + wq2) * wk +
                           md * std::pow(nd, 1.5) * wv * delta * (wk + wq2) +
                           wv * std::sqrt(md) * eps / s + delta * std::sqrt(md * nd);
  out.composite = {lhs, composite};

  const Matrix a = attention_weights(p, hs);
  const Matrix a2 = attention_weights(q, hs2);
  double l1 = 0.0;
  Vector da(m);
  for (std::size_t i = 0; i < m; ++i) {
    da[i] = a(w, i) - a2(w, i);
    l1 += std::abs(da[i]);
  }
  out.statement = {lhs, eps + wv * std::sqrt(nd) * l1 + wv * eps / s + delta * std::sqrt(nd)};

  const Vector dz = sub(attention_logits(p, hs, w), attention_logits(q, hs2, w));
  out.softmax = {norm2(da), 0.5 * norm2(dz)};
  return out;
}

BoundCheckReport scan_bound(Lemma lemma, std::uint64_t seed, const BoundScanOptions& opts) {
  if (opts.eps_values.empty() || opts.delta_values.empty()) {
    throw ConfigurationError("scan_bound: eps/delta lists must be nonempty");
  }
  const Rng base(seed, 0xB0D5ULL + static_cast<std::uint64_t>(lemma));
  std::vector<Trial> trials(opts.trials);
  kernels::omp::for_each_index(opts.trials, [&](std::size_t i) {
    trials[i] = run_trial(lemma, base.split(i), opts);
  });

  BoundCheckReport r;
  r.lemma = lemma;
  r.trials = opts.trials;
  r.ratios.reserve(opts.trials);
  for (const Trial& t : trials) {
    r.ratios.push_back(t.ratio);
    r.max_lhs_over_rhs = std::max(r.max_lhs_over_rhs, t.ratio);
    r.max_lhs = std::max(r.max_lhs, t.lhs);
    r.max_statement_ratio = std::max(r.max_statement_ratio, t.statement_ratio);
    r.violations += t.violated ? 1 : 0;
    r.statement_violations += t.statement_violated ? 1 : 0;
    r.sub_bound_violations += t.sub_violated ? 1 : 0;
  }
  return r;
}

}  // namespace steerkit
