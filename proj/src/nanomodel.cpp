#include "steerkit/nanomodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "steerkit/errors.hpp"
#include "steerkit/random.hpp"

namespace steerkit {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(name) + " has shape " + m.shape_string() + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void require_finite(const Matrix& m, const char* name) {
  if (!m.all_finite()) throw PreconditionError(std::string(name) + " has non-finite entries");
}

}  // namespace

double activate(Activation phi, double x) {
  switch (phi) {
    case Activation::sigmoid: return sigmoid(x);
    case Activation::silu: return x * sigmoid(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
  }
  return x;
}

double activate_derivative(Activation phi, double x) {
  switch (phi) {
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

std::string to_string(Activation phi) {
  switch (phi) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::silu: return "silu";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "silu") return Activation::silu;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ConfigurationError("unknown activation '" + name + "'");
}

double lipschitz_constant(Activation phi) {
  switch (phi) {
    case Activation::sigmoid: return 0.25;
    // max of silu'(x), attained near x = 2.3994
    case Activation::silu: return 1.0998393201288669;
    case Activation::relu: return 1.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

double output_bound(Activation phi) {
  return phi == Activation::sigmoid ? 1.0 : std::numeric_limits<double>::infinity();
}

void GluParams::validate() const {
  const std::size_t d = w_g.cols();
  const std::size_t k = w_g.rows();
  if (d == 0 || k == 0) throw DimensionError("GluParams: empty weights");
  if (d > kMaxDModel) throw DimensionError("GluParams: d_model " + std::to_string(d) + " > 64");
  if (k > kMaxDMlp) throw DimensionError("GluParams: d_mlp " + std::to_string(k) + " > 256");
  require_shape(w_u, k, d, "w_u");
  require_shape(w_d, d, k, "w_d");
  require_finite(w_g, "w_g");
  require_finite(w_u, "w_u");
  require_finite(w_d, "w_d");
}

void AttnParams::validate() const {
  const std::size_t d = w_q.rows();
  if (d == 0) throw DimensionError("AttnParams: empty weights");
  if (d > kMaxDModel) throw DimensionError("AttnParams: d_model " + std::to_string(d) + " > 64");
  require_shape(w_q, d, d, "w_q");
  require_shape(w_k, d, d, "w_k");
  require_shape(w_v, d, d, "w_v");
  require_finite(w_q, "w_q");
  require_finite(w_k, "w_k");
  require_finite(w_v, "w_v");
}

GluState glu_state(const GluParams& p, const Vector& h) {
  if (h.size() != p.d_model()) {
    throw DimensionError("glu_forward: input length " + std::to_string(h.size()) +
                         " for d_model " + std::to_string(p.d_model()));
  }
  GluState s;
  s.a_g = p.w_g * h;
  s.a_u = p.w_u * h;
  s.m.resize(s.a_g.size());
  for (std::size_t i = 0; i < s.m.size(); ++i) s.m[i] = activate(p.phi, s.a_g[i]) * s.a_u[i];
  s.out = p.w_d * s.m;
  return s;
}

Vector glu_forward(const GluParams& p, const Vector& h) { return glu_state(p, h).out; }

Vector layernorm(const Vector& h) {
  const std::size_t n = h.size();
  if (n < 2) throw DimensionError("layernorm: needs at least 2 entries");
  const double sd = population_std(h);
  if (!(sd > kMinLayerNormStd)) {
    throw DegenerateInputError("layernorm: input is constant (std " + std::to_string(sd) + ")");
  }
  const double mu = mean(h);
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = h[i] - mu;
  // ||P h|| = sqrt(n) * std, so the scale is 1 / std.
  const double scale = std::sqrt(static_cast<double>(n)) / norm2(out);
  for (double& x : out) x *= scale;
  return out;
}

Matrix attention_weights(const AttnParams& p, const Sequence& hs, bool causal) {
  const std::size_t m = hs.size();
  if (m == 0) throw DimensionError("attention: empty sequence");
  const std::size_t n = p.d_model();
  Sequence q(m), k(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (hs[i].size() != n) throw DimensionError("attention: position width mismatch");
    const Vector ln = layernorm(hs[i]);
    q[i] = p.w_q * ln;
    k[i] = p.w_k * ln;
  }
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  Matrix a(m, m);
  for (std::size_t w = 0; w < m; ++w) {
    const std::size_t last = causal ? w + 1 : m;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < last; ++i) {
      a(w, i) = dot(q[w], k[i]) * inv_sqrt_n;
      top = std::max(top, a(w, i));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < last; ++i) {
      a(w, i) = std::exp(a(w, i) - top);
      total += a(w, i);
    }
    for (std::size_t i = 0; i < last; ++i) a(w, i) /= total;
  }
  return a;
}

Sequence attn_forward(const AttnParams& p, const Sequence& hs, bool causal) {
  const Matrix a = attention_weights(p, hs, causal);
  const std::size_t m = hs.size();
  Sequence values(m);
  for (std::size_t i = 0; i < m; ++i) values[i] = p.w_v * layernorm(hs[i]);
  Sequence out(hs);
  for (std::size_t w = 0; w < m; ++w) {
    for (std::size_t i = 0; i < m; ++i) {
      if (a(w, i) != 0.0) axpy(a(w, i), values[i], out[w]);
    }
  }
  return out;
}

BlockTrace block_forward(const GluParams& glu, const AttnParams& attn, const Sequence& hs,
                         const BlockOptions& opts, const BlockHooks& hooks) {
  if (glu.d_model() != attn.d_model()) throw DimensionError("block: glu/attn d_model mismatch");
  BlockTrace t;
  t.h_in = hs;
  Sequence attn_out = attn_forward(attn, hs, opts.causal);
  const std::size_t m = hs.size();
  t.mlp_in.resize(m);
  t.post_mlp.resize(m);
  t.post_block.resize(m);
  for (std::size_t w = 0; w < m; ++w) {
    Vector x = opts.inner_layernorm ? layernorm(attn_out[w]) : attn_out[w];
    if (hooks.pre_mlp) x = hooks.pre_mlp(w, x);
    Vector y = glu_forward(glu, x);
    if (hooks.post_mlp) y = hooks.post_mlp(w, y);
    Vector z = opts.zero_skip ? y : add(attn_out[w], y);
    if (hooks.post_block) z = hooks.post_block(w, z);
    t.mlp_in[w] = std::move(x);
    t.post_mlp[w] = std::move(y);
    t.post_block[w] = std::move(z);
  }
  if (opts.zero_skip) {
    t.post_attn.assign(m, Vector(glu.d_model(), 0.0));
  } else {
    t.post_attn = std::move(attn_out);
  }
  return t;
}

Vector mlp_block_ratio(const BlockTrace& trace) {
  Vector r(trace.positions());
  for (std::size_t w = 0; w < r.size(); ++w) {
    const double denom = norm2(trace.post_block[w]);
    if (denom == 0.0) {
      throw UndefinedRatioError("mlp_block_ratio: zero post_block at position " +
                                std::to_string(w));
    }
    r[w] = norm2(trace.post_mlp[w]) / denom;
  }
  return r;
}

GluParams random_glu(Rng& rng, std::size_t d_model, std::size_t d_mlp, Activation phi,
                     double scale) {
  GluParams p;
  const double s_in = scale / std::sqrt(static_cast<double>(d_model));
  const double s_out = scale / std::sqrt(static_cast<double>(d_mlp));
  p.w_g = random_normal(rng, d_mlp, d_model, s_in);
  p.w_u = random_normal(rng, d_mlp, d_model, s_in);
  p.w_d = random_normal(rng, d_model, d_mlp, s_out);
  p.phi = phi;
  p.validate();
  return p;
}

AttnParams random_attn(Rng& rng, std::size_t d_model, double scale) {
  AttnParams p;
  const double s = scale / std::sqrt(static_cast<double>(d_model));
  p.w_q = random_normal(rng, d_model, d_model, s);
  p.w_k = random_normal(rng, d_model, d_model, s);
  p.w_v = random_normal(rng, d_model, d_model, s);
  p.validate();
  return p;
}

}  // namespace steerkit
