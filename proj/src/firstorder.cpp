#include "steerkit/firstorder.hpp"

#include <cmath>
#include <limits>

#include "steerkit/errors.hpp"

namespace steerkit {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* name) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(name) + " has shape " + a.shape_string() + ", expected " +
                         b.shape_string());
  }
}

// Row scaling: Diag(s) * m.
Matrix scale_rows(const Vector& s, const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (double& x : out.row(i)) x *= s[i];
  }
  return out;
}

double vec_relative(const Vector& exact, const Vector& linear) {
  const double num = norm2(sub(exact, linear));
  const double den = norm2(linear);
  if (den == 0.0) {
    if (num == 0.0) return 0.0;
    throw UndefinedRatioError("first-order residual: zero linear term with nonzero remainder");
  }
  return num / den;
}

}  // namespace

Matrix glu_jacobian(const GluParams& p, const Vector& h) {
  const GluState s = glu_state(p, h);
  Vector gate(s.a_g.size()), slope(s.a_g.size());
  for (std::size_t i = 0; i < gate.size(); ++i) {
    gate[i] = activate(p.phi, s.a_g[i]);
    slope[i] = s.a_u[i] * activate_derivative(p.phi, s.a_g[i]);
  }
  return p.w_d * (scale_rows(gate, p.w_u) + scale_rows(slope, p.w_g));
}

Vector mlp_forward(const Matrix& w1, const Matrix& w2, Activation phi, const Vector& h) {
  Vector a = w1 * h;
  for (double& x : a) x = activate(phi, x);
  return w2 * a;
}

Matrix mlp_jacobian(const Matrix& w1, const Matrix& w2, Activation phi, const Vector& h) {
  if (w2.cols() != w1.rows()) throw DimensionError("mlp_jacobian: w2/w1 inner dimension");
  Vector a = w1 * h;
  for (double& x : a) x = activate_derivative(phi, x);
  return w2 * scale_rows(a, w1);
}

Matrix central_difference_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& h,
                                   double step) {
  const Vector f0 = f(h);
  Matrix j(f0.size(), h.size());
  Vector probe = h;
  for (std::size_t k = 0; k < h.size(); ++k) {
    probe[k] = h[k] + step;
    const Vector fp = f(probe);
    probe[k] = h[k] - step;
    const Vector fm = f(probe);
    probe[k] = h[k];
    for (std::size_t i = 0; i < f0.size(); ++i) j(i, k) = (fp[i] - fm[i]) / (2.0 * step);
  }
  return j;
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double num = frobenius_norm(a - b);
  const double den = frobenius_norm(b);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

Vector glu_ft_delta(const GluParams& p, const Vector& h, const Matrix& dwg, const Matrix& dwu,
                    const Matrix& dwd) {
  const GluState s = glu_state(p, h);
  const Vector ag = add(s.a_g, dwg * h);
  const Vector au = add(s.a_u, dwu * h);
  Vector m2(ag.size());
  for (std::size_t i = 0; i < m2.size(); ++i) m2[i] = activate(p.phi, ag[i]) * au[i];
  return add(p.w_d * sub(m2, s.m), dwd * m2);
}

Vector glu_ft_linear(const GluParams& p, const Vector& h, const Matrix& dwg, const Matrix& dwu,
                     const Matrix& dwd) {
  const GluState s = glu_state(p, h);
  const Vector dg = dwg * h;
  const Vector du = dwu * h;
  Vector dm(s.m.size());
  for (std::size_t i = 0; i < dm.size(); ++i) {
    dm[i] = activate(p.phi, s.a_g[i]) * du[i] +
            s.a_u[i] * activate_derivative(p.phi, s.a_g[i]) * dg[i];
  }
  return add(p.w_d * dm, dwd * s.m);
}

FirstOrderReport steer_vs_ft_expansion(const GluParams& p, const Vector& h, const Vector& dh,
                                       const Matrix& dwg, const Matrix& dwu, const Matrix& dwd) {
  require_same_shape(dwg, p.w_g, "dwg");
  require_same_shape(dwu, p.w_u, "dwu");
  require_same_shape(dwd, p.w_d, "dwd");
  if (dh.size() != p.d_model()) throw DimensionError("steer_vs_ft_expansion: dh length");
  const double norms[] = {norm2(dh), frobenius_norm(dwg), frobenius_norm(dwu),
                          frobenius_norm(dwd)};
  for (double n : norms) {
    if (!(n <= kMaxPerturbationNorm)) {
      throw PreconditionError("steer_vs_ft_expansion: perturbation norm " + std::to_string(n) +
                              " exceeds 0.1");
    }
  }

  FirstOrderReport r;
  r.epsilon_grid = kEpsilonGrid;
  const Vector base = glu_forward(p, h);
  const Matrix jac = glu_jacobian(p, h);
  for (double eps : kEpsilonGrid) {
    const Vector step = scaled(dh, eps);
    const Vector exact_steer = sub(glu_forward(p, add(h, step)), base);
    r.steer_residual.push_back(vec_relative(exact_steer, jac * step));

    const Matrix g = dwg * eps, u = dwu * eps, d = dwd * eps;
    r.ft_residual.push_back(
        vec_relative(glu_ft_delta(p, h, g, u, d), glu_ft_linear(p, h, g, u, d)));
  }
  r.mismatch_term_norm = norm2(dwd * glu_state(p, h).m);
  r.steer_slope = loglog_slope(r.epsilon_grid, r.steer_residual);
  r.ft_slope = loglog_slope(r.epsilon_grid, r.ft_residual);
  return r;
}

std::optional<double> loglog_slope(const Vector& eps, const Vector& residual) {
  if (eps.size() != residual.size()) throw DimensionError("loglog_slope: length mismatch");
  Vector lx, ly;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (eps[i] > 1e-2 * (1.0 + 1e-12)) continue;
    if (!(residual[i] > 0.0)) return std::nullopt;
    lx.push_back(std::log(eps[i]));
    ly.push_back(std::log(residual[i]));
  }
  if (lx.size() < 2) return std::nullopt;
  const double mx = mean(lx), my = mean(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

PostMlpFit ft_match_by_postmlp(const GluParams& p, const Matrix& dwg, const Matrix& dwu,
                               const Matrix& dwd, const Sequence& hs) {
  if (hs.empty()) throw PreconditionError("ft_match_by_postmlp: empty sample");
  require_same_shape(dwg, p.w_g, "dwg");
  require_same_shape(dwu, p.w_u, "dwu");
  require_same_shape(dwd, p.w_d, "dwd");
  const std::size_t d = p.d_model();
  const std::size_t n = hs.size();

  Matrix outputs(d, n), target(d, n);
  for (std::size_t i = 0; i < n; ++i) {
    outputs.set_col(i, glu_forward(p, hs[i]));
    target.set_col(i, glu_ft_delta(p, hs[i], dwg, dwu, dwd));
  }
  const double target_norm = frobenius_norm(target);

  PostMlpFit fit;
  fit.adapter = SteeringAdapter::zeros(Locus::post_mlp, AdapterKind::full, d);
  if (target_norm == 0.0) return fit;
  fit.adapter.m = least_squares(outputs, target);
  fit.residual = frobenius_norm(fit.adapter.m * outputs - target) / target_norm;

  // Pre-MLP: J_i P h_i ~ target_i, linear in the d*d entries of P.
  Matrix design(d * d, n * d);
  Matrix rhs(1, n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix jac = glu_jacobian(p, hs[i]);
    for (std::size_t r = 0; r < d; ++r) {
      const std::size_t eq = i * d + r;
      rhs(0, eq) = target(r, i);
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) design(j * d + k, eq) = jac(r, j) * hs[i][k];
      }
    }
  }
  const Matrix vec_p = least_squares(design, rhs);
  const Matrix pre(d, d, Vector(vec_p.data().begin(), vec_p.data().end()));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector shifted = glu_forward(p, add(hs[i], pre * hs[i]));
    const Vector diff = sub(sub(shifted, outputs.col(i)), target.col(i));
    acc += dot(diff, diff);
  }
  fit.pre_mlp_residual = std::sqrt(acc) / target_norm;
  return fit;
}

}  // namespace steerkit
