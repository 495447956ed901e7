#include <algorithm>
#include <cmath>
#include <numeric>

#include "steerkit/errors.hpp"
#include "steerkit/numkit.hpp"

namespace steerkit {
namespace {

constexpr int kMaxSweeps = 80;
constexpr double kOrthTol = 1e-15;

using Columns = std::vector<Vector>;

double col_dot(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Appends unit vectors orthogonal to every column in `basis` until it holds
// `target` columns. Candidates are the coordinate axes, best residual first.
void complete_basis(Columns& basis, std::size_t dim, std::size_t target) {
  while (basis.size() < target) {
    Vector best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < dim; ++e) {
      Vector v(dim, 0.0);
      v[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) {
          const double c = col_dot(q, v);
          for (std::size_t i = 0; i < dim; ++i) v[i] -= c * q[i];
        }
      }
      const double nv = norm2(v);
      if (nv > best_norm) {
        best_norm = nv;
        best = std::move(v);
      }
    }
    for (double& x : best) x /= best_norm;
    basis.push_back(std::move(best));
  }
}

// Thin SVD for rows >= cols.
SvdResult svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Columns w(n, Vector(m));
  for (std::size_t j = 0; j < n; ++j) w[j] = a.col(j);
  Columns v(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  bool converged = n < 2;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = col_dot(w[p], w[p]);
        const double beta = col_dot(w[q], w[q]);
        const double gamma = col_dot(w[p], w[q]);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kOrthTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw DecompositionError("svd: Jacobi sweeps did not converge for " + a.shape_string());
  }

  Vector sv(n);
  for (std::size_t j = 0; j < n; ++j) sv[j] = norm2(w[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

  const double smax = n > 0 ? sv[order.front()] : 0.0;
  SvdResult r;
  r.s.resize(n);
  r.vt = Matrix(n, n);
  Columns ucols;
  ucols.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    r.s[k] = sv[j];
    r.vt.set_row(k, v[j]);
    if (sv[j] > 0.0 && sv[j] > kRankTolerance * smax) {
      Vector u = w[j];
      for (double& x : u) x /= sv[j];
      ucols.push_back(std::move(u));
    }
  }
  // Directions with negligible singular value carry no reconstruction weight;
  // give them orthonormal left vectors instead of amplified noise.
  complete_basis(ucols, m, n);
  r.u = Matrix::from_columns(ucols);
  if (n == 0) r.u = Matrix(m, 0);
  return r;
}

}  // namespace

std::size_t SvdResult::rank(double tol) const {
  if (s.empty() || s.front() <= 0.0) return 0;
  const double cut = tol * s.front();
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [&](double x) { return x > cut; }));
}

Matrix SvdResult::reconstruct() const {
  Matrix us = u;
  for (std::size_t i = 0; i < us.rows(); ++i) {
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s[j];
  }
  return us * vt;
}

SvdResult svd(const Matrix& a) {
  if (!a.all_finite()) throw PreconditionError("svd: non-finite input");
  if (a.rows() >= a.cols()) return svd_tall(a);
  SvdResult t = svd_tall(a.transposed());
  SvdResult r;
  r.u = t.vt.transposed();
  r.s = std::move(t.s);
  r.vt = t.u.transposed();
  return r;
}

}  // namespace steerkit
