#include <algorithm>
#include <cmath>

#include "steerkit/errors.hpp"
#include "steerkit/random.hpp"
#include "steerkit/subspace.hpp"

namespace steerkit {
namespace {

double outside_ratio(const Matrix& m, const Matrix& basis) {
  const double n = frobenius_norm(m);
  if (n == 0.0) return 0.0;
  return frobenius_norm(m - basis * matmul_tn(basis, m)) / n;
}

// Unit vector orthogonal to the given (possibly dependent) vectors.
Vector orthogonal_unit(Rng& rng, std::size_t n, const std::vector<Vector>& avoid) {
  const Matrix q = orthonormal_basis(Matrix::from_columns(avoid));
  for (;;) {
    Vector v = random_normal_vector(rng, n);
    for (int pass = 0; pass < 2; ++pass) v = sub(v, q * matvec_t(q, v));
    const double nv = norm2(v);
    if (nv > 1e-6) return scaled(v, 1.0 / nv);
  }
}

}  // namespace

Matrix top_singular_gram(const Matrix& a, const Matrix& b, std::size_t k_max) {
  const SvdResult fa = svd(a);
  const SvdResult fb = svd(b);
  const std::size_t k = std::min({k_max, fa.rank(), fb.rank()});
  if (k == 0) return Matrix(0, 0);
  return matmul_tn(fa.u.col_block(0, k), fb.u.col_block(0, k));
}

CollapseReport simulate_collapse(const FeatureModel& fm, const Matrix& g_target,
                                 const CollapseOptions& opts) {
  fm.validate();
  if (!(opts.lr > 0.0)) throw ConfigurationError("simulate_collapse: lr must be positive");
  const std::size_t d = fm.dim();
  const double w_norm = frobenius_norm(fm.w);
  const double guard = opts.norm_guard * w_norm;

  const Matrix u_y = orthonormal_basis(fm.base_output());

  CollapseReport rep;
  rep.dh = Matrix(d, d);
  rep.dw = Matrix(fm.w.rows(), fm.w.cols());

  double initial_loss = 0.0;
  for (std::size_t step = 0; step <= opts.steps; ++step) {
    const FeatureEval e = evaluate_feature_model(fm, g_target, rep.dh, rep.dw);
    if (step == 0) initial_loss = e.loss;
    rep.loss_curve.push_back(e.loss);
    if (!std::isfinite(e.loss) || e.loss > opts.blowup_factor * initial_loss) {
      throw InstabilityError("simulate_collapse: loss grew from " + std::to_string(initial_loss) +
                             " to " + std::to_string(e.loss) + " at step " +
                             std::to_string(step));
    }
    if (step == opts.steps) break;

    rep.dh -= opts.lr * e.grad_dh;
    rep.dw -= opts.lr * e.grad_dw;
    if (opts.with_orth && opts.orth_rank > 0) {
      const SvdResult fw = svd(rep.dw);
      const std::size_t r = std::min(opts.orth_rank, fw.rank());
      if (r > 0) {
        const Matrix v = fw.u.col_block(0, r);
        rep.dh -= v * matmul_tn(v, rep.dh);
      }
    }

    const double nh = frobenius_norm(rep.dh);
    const double nw = frobenius_norm(rep.dw);
    if (w_norm > 0.0) rep.max_update_ratio = std::max(rep.max_update_ratio, std::max(nh, nw) / w_norm);
    if (nh > guard || nw > guard) {
      throw PreconditionError("simulate_collapse: updates left the early-training regime (" +
                              std::to_string(std::max(nh, nw)) + " > " + std::to_string(guard) +
                              ")");
    }
    rep.containment_dh = std::max(rep.containment_dh, outside_ratio(rep.dh, u_y));
    rep.containment_dw = std::max(rep.containment_dw, outside_ratio(rep.dw, u_y));
  }

  rep.gram = top_singular_gram(rep.dh, rep.dw, opts.gram_k);
  rep.k = rep.gram.rows();
  if (rep.k > 0) {
    double diag = 0.0, off = 0.0;
    for (std::size_t i = 0; i < rep.k; ++i) {
      for (std::size_t j = 0; j < rep.k; ++j) {
        (i == j ? diag : off) += std::abs(rep.gram(i, j));
      }
    }
    rep.diag_mass = diag / static_cast<double>(rep.k);
    rep.offdiag_mass = rep.k > 1 ? off / static_cast<double>(rep.k * (rep.k - 1)) : 0.0;
    rep.top_overlap = std::abs(rep.gram(0, 0));
  }
  return rep;
}

CollapseCase make_collapse_case(Rng& rng, std::size_t d, std::size_t p, std::size_t n,
                                double primary, double secondary) {
  CollapseCase c;
  c.model.x = random_normal(rng, d, n);
  Matrix mix = random_normal(rng, p, d, 1.0 / std::sqrt(static_cast<double>(d)));
  c.model.f = mix * c.model.x;
  for (double& v : c.model.f.data()) v = std::tanh(v);
  c.model.w = random_normal(rng, d, p, 1.0 / std::sqrt(static_cast<double>(p)));
  const Matrix y = c.model.base_output();

  const Matrix u = random_orthonormal(rng, d, 2);
  c.u1 = u.col(0);
  c.u2 = u.col(1);
  const Vector r1 = random_unit_vector(rng, n);
  // r2 keeps the secondary residual decoupled from r1 in both gradients:
  // Y r2 _|_ Y r1 and F r2 _|_ F r1.
  const Vector r2 = orthogonal_unit(
      rng, n, {r1, matvec_t(y, y * r1), matvec_t(c.model.f, c.model.f * r1)});

  c.target = y + primary * outer(c.u1, r1) + secondary * outer(c.u2, r2);
  return c;
}

}  // namespace steerkit
