#include <algorithm>
#include <cmath>

#include "steerkit/adapters.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/random.hpp"

namespace steerkit {
namespace {

void require_len(const Vector& v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw DimensionError(std::string("steering adapter: ") + name + " has length " +
                         std::to_string(v.size()) + ", expected " + std::to_string(n));
  }
}

void append(Vector& out, std::span<const double> xs) { out.insert(out.end(), xs.begin(), xs.end()); }

std::size_t take(const Vector& theta, std::size_t at, std::span<double> dst) {
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(at),
            theta.begin() + static_cast<std::ptrdiff_t>(at + dst.size()), dst.begin());
  return at + dst.size();
}

}  // namespace

std::string to_string(Locus locus) {
  switch (locus) {
    case Locus::pre_mlp: return "pre_mlp";
    case Locus::post_mlp: return "post_mlp";
    case Locus::post_block: return "post_block";
  }
  return "post_block";
}

std::string to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::full: return "full";
    case AdapterKind::bottleneck: return "bottleneck";
    case AdapterKind::rank1: return "rank1";
    case AdapterKind::vector: return "vector";
  }
  return "vector";
}

Locus locus_from_string(const std::string& name) {
  if (name == "pre_mlp") return Locus::pre_mlp;
  if (name == "post_mlp") return Locus::post_mlp;
  if (name == "post_block") return Locus::post_block;
  throw ConfigurationError("unknown locus '" + name + "'");
}

AdapterKind adapter_kind_from_string(const std::string& name) {
  if (name == "full") return AdapterKind::full;
  if (name == "bottleneck") return AdapterKind::bottleneck;
  if (name == "rank1") return AdapterKind::rank1;
  if (name == "vector") return AdapterKind::vector;
  throw ConfigurationError("unknown adapter parameterization '" + name + "'");
}

std::size_t SteeringAdapter::dim() const {
  switch (kind) {
    case AdapterKind::full: return m.rows();
    case AdapterKind::bottleneck: return w2.rows();
    case AdapterKind::rank1: return u.size();
    case AdapterKind::vector: return v.size();
  }
  return 0;
}

std::size_t SteeringAdapter::rank() const {
  switch (kind) {
    case AdapterKind::full: return m.rows();
    case AdapterKind::bottleneck: return w1.rows();
    default: return 1;
  }
}

void SteeringAdapter::validate() const {
  const std::size_t d = dim();
  if (d == 0) throw DimensionError("steering adapter: zero width");
  switch (kind) {
    case AdapterKind::full:
      if (m.cols() != d) throw DimensionError("steering adapter: full matrix must be square");
      break;
    case AdapterKind::bottleneck:
      if (w1.rows() == 0) throw DimensionError("steering adapter: bottleneck rank must be >= 1");
      if (w1.cols() != d || w2.cols() != w1.rows()) {
        throw DimensionError("steering adapter: bottleneck shapes " + w1.shape_string() + " / " +
                             w2.shape_string());
      }
      if (phi != Activation::identity && phi != Activation::silu) {
        throw ConfigurationError("steering adapter: bottleneck phi must be identity or silu");
      }
      break;
    case AdapterKind::rank1: require_len(v, d, "v"); break;
    case AdapterKind::vector: break;
  }
}

Vector SteeringAdapter::shift(const Vector& h) const {
  const std::size_t d = dim();
  if (h.size() != d) {
    throw DimensionError("steering adapter: input length " + std::to_string(h.size()) +
                         " for width " + std::to_string(d));
  }
  switch (kind) {
    case AdapterKind::full: return m * h;
    case AdapterKind::bottleneck: {
      Vector q = w1 * h;
      for (double& x : q) x = activate(phi, x);
      return w2 * q;
    }
    case AdapterKind::rank1: return scaled(u, dot(v, h));
    case AdapterKind::vector: return v;
  }
  return Vector(d, 0.0);
}

std::size_t SteeringAdapter::param_count() const {
  switch (kind) {
    case AdapterKind::full: return m.size();
    case AdapterKind::bottleneck: return w1.size() + w2.size();
    case AdapterKind::rank1: return u.size() + v.size();
    case AdapterKind::vector: return v.size();
  }
  return 0;
}

Vector SteeringAdapter::flatten() const {
  Vector out;
  out.reserve(param_count());
  switch (kind) {
    case AdapterKind::full: append(out, m.data()); break;
    case AdapterKind::bottleneck:
      append(out, w1.data());
      append(out, w2.data());
      break;
    case AdapterKind::rank1:
      append(out, u);
      append(out, v);
      break;
    case AdapterKind::vector: append(out, v); break;
  }
  return out;
}

void SteeringAdapter::unflatten(const Vector& theta) {
  if (theta.size() != param_count()) throw DimensionError("steering adapter: bad parameter count");
  std::size_t at = 0;
  switch (kind) {
    case AdapterKind::full: take(theta, at, m.data()); break;
    case AdapterKind::bottleneck:
      at = take(theta, at, w1.data());
      take(theta, at, w2.data());
      break;
    case AdapterKind::rank1:
      at = take(theta, at, u);
      take(theta, at, v);
      break;
    case AdapterKind::vector: take(theta, at, v); break;
  }
}

SteeringAdapter SteeringAdapter::zeros(Locus locus, AdapterKind kind, std::size_t d, std::size_t r,
                                       Activation phi) {
  SteeringAdapter ad;
  ad.locus = locus;
  ad.kind = kind;
  ad.phi = phi;
  switch (kind) {
    case AdapterKind::full: ad.m = Matrix(d, d); break;
    case AdapterKind::bottleneck:
      ad.w1 = Matrix(r, d);
      ad.w2 = Matrix(d, r);
      break;
    case AdapterKind::rank1:
      ad.u = Vector(d, 0.0);
      ad.v = Vector(d, 0.0);
      break;
    case AdapterKind::vector: ad.v = Vector(d, 0.0); break;
  }
  ad.validate();
  return ad;
}

SteeringAdapter SteeringAdapter::initialized(Locus locus, AdapterKind kind, std::size_t d,
                                             std::size_t r, Activation phi, Rng& rng) {
  SteeringAdapter ad = zeros(locus, kind, d, r, phi);
  const double half = 1.0 / std::sqrt(static_cast<double>(d));
  if (kind == AdapterKind::bottleneck) ad.w1 = random_uniform(rng, r, d, half);
  if (kind == AdapterKind::rank1) {
    for (double& x : ad.v) x = rng.uniform(-half, half);
  }
  return ad;
}

Vector apply_steering(const SteeringAdapter& ad, const Vector& h) { return add(h, ad.shift(h)); }

Vector steering_backward(const SteeringAdapter& ad, const Vector& h, const Vector& e,
                         std::span<double> g) {
  if (g.size() != ad.param_count()) throw DimensionError("steering_backward: gradient size");
  const std::size_t d = ad.dim();
  Vector dh = e;
  switch (ad.kind) {
    case AdapterKind::full:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += e[i] * h[j];
      }
      axpy(1.0, matvec_t(ad.m, e), dh);
      break;
    case AdapterKind::bottleneck: {
      const std::size_t r = ad.w1.rows();
      const Vector pre = ad.w1 * h;
      Vector q(r), dp = matvec_t(ad.w2, e);
      for (std::size_t k = 0; k < r; ++k) {
        q[k] = activate(ad.phi, pre[k]);
        dp[k] *= activate_derivative(ad.phi, pre[k]);
      }
      for (std::size_t k = 0; k < r; ++k) {
        for (std::size_t j = 0; j < d; ++j) g[k * d + j] += dp[k] * h[j];
      }
      const std::size_t off = r * d;
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < r; ++k) g[off + i * r + k] += e[i] * q[k];
      }
      axpy(1.0, matvec_t(ad.w1, dp), dh);
      break;
    }
    case AdapterKind::rank1: {
      const double vh = dot(ad.v, h);
      const double ue = dot(ad.u, e);
      for (std::size_t i = 0; i < d; ++i) {
        g[i] += e[i] * vh;
        g[d + i] += ue * h[i];
      }
      axpy(ue, ad.v, dh);
      break;
    }
    case AdapterKind::vector:
      for (std::size_t i = 0; i < d; ++i) g[i] += e[i];
      break;
  }
  return dh;
}

std::string to_string(WeightTarget target) {
  switch (target) {
    case WeightTarget::w_g: return "w_g";
    case WeightTarget::w_u: return "w_u";
    case WeightTarget::w_d: return "w_d";
  }
  return "w_d";
}

WeightTarget weight_target_from_string(const std::string& name) {
  if (name == "w_g") return WeightTarget::w_g;
  if (name == "w_u") return WeightTarget::w_u;
  if (name == "w_d") return WeightTarget::w_d;
  throw ConfigurationError("unknown weight target '" + name + "'");
}

Matrix WeightUpdate::delta() const {
  if (b.cols() != a.rows()) {
    throw DimensionError("weight update: b " + b.shape_string() + " vs a " + a.shape_string());
  }
  Matrix d = b * a;
  d *= scale;
  return d;
}

WeightUpdate WeightUpdate::initialized(WeightTarget target, std::size_t out, std::size_t in,
                                       std::size_t r, Rng& rng) {
  WeightUpdate w;
  w.target = target;
  w.b = Matrix(out, r);
  w.a = random_uniform(rng, r, in, 1.0 / std::sqrt(static_cast<double>(in)));
  return w;
}

Matrix& target_weight(GluParams& p, WeightTarget target) {
  switch (target) {
    case WeightTarget::w_g: return p.w_g;
    case WeightTarget::w_u: return p.w_u;
    case WeightTarget::w_d: return p.w_d;
  }
  return p.w_d;
}

const Matrix& target_weight(const GluParams& p, WeightTarget target) {
  return target_weight(const_cast<GluParams&>(p), target);
}

GluParams apply_weight_update(const GluParams& p, const WeightUpdate& w) {
  GluParams out = p;
  Matrix& dst = target_weight(out, w.target);
  const Matrix d = w.delta();
  if (d.rows() != dst.rows() || d.cols() != dst.cols()) {
    throw DimensionError("weight update for " + to_string(w.target) + " has shape " +
                         d.shape_string() + ", weight is " + dst.shape_string());
  }
  dst += d;
  return out;
}

double JointAdapter::max_normalized_overlap() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < steer.w2.cols(); ++i) {
    const Vector wi = steer.w2.col(i);
    const double ni = norm2(wi);
    if (ni == 0.0) continue;
    for (std::size_t j = 0; j < wupd.b.cols(); ++j) {
      const Vector bj = wupd.b.col(j);
      const double nj = norm2(bj);
      if (nj == 0.0) continue;
      worst = std::max(worst, std::abs(dot(wi, bj)) / (ni * nj));
    }
  }
  return worst;
}

Matrix project_out(const Matrix& w, const Matrix& basis_of) {
  const Matrix v = orthonormal_basis(basis_of);
  if (v.cols() == 0) return w;
  return w - v * matmul_tn(v, w);
}

JointAdapter project_orthogonal(const JointAdapter& j) {
  if (!j.orth_enabled) throw PreconditionError("project_orthogonal: orthogonality is disabled");
  if (j.steer.kind != AdapterKind::bottleneck) {
    throw ConfigurationError("project_orthogonal: steering part must be a bottleneck adapter");
  }
  JointAdapter out = j;
  out.steer.w2 = project_out(j.steer.w2, j.wupd.b);
  return out;
}

BlockTrace steered_block_forward(const GluParams& glu, const AttnParams& attn,
                                 const std::vector<SteeringAdapter>& adapters,
                                 const std::vector<WeightUpdate>& wupds, const Sequence& hs,
                                 const BlockOptions& opts) {
  GluParams p = glu;
  for (const auto& w : wupds) p = apply_weight_update(p, w);
  const SteeringAdapter* at[3] = {nullptr, nullptr, nullptr};
  for (const auto& ad : adapters) {
    ad.validate();
    if (ad.dim() != glu.d_model()) throw DimensionError("steering adapter width != d_model");
    auto& slot = at[static_cast<int>(ad.locus)];
    if (slot != nullptr) {
      throw ConfigurationError("two adapters at locus " + to_string(ad.locus) +
                               "; compose them into one adapter instead");
    }
    slot = &ad;
  }
  BlockHooks hooks;
  auto hook_for = [](const SteeringAdapter* ad) {
    return [ad](std::size_t, const Vector& h) { return apply_steering(*ad, h); };
  };
  if (at[0]) hooks.pre_mlp = hook_for(at[0]);
  if (at[1]) hooks.post_mlp = hook_for(at[1]);
  if (at[2]) hooks.post_block = hook_for(at[2]);
  return block_forward(p, attn, hs, opts, hooks);
}

}  // namespace steerkit
