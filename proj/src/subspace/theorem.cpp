#include <algorithm>
#include <cmath>

#include "steerkit/errors.hpp"
#include "steerkit/subspace.hpp"

namespace steerkit {
namespace {

constexpr double kMinIntersectionAngle = 1e-6;

// First r right singular vectors as columns (n x r).
Matrix right_vectors(const SvdResult& f, std::size_t r) {
  return f.vt.row_block(0, r).transposed();
}

}  // namespace

PrincipalAngleReport theorem1_error(const Matrix& x, const Matrix& y, const Matrix& a_p,
                                    double tolerance) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError("theorem1_error: X " + x.shape_string() + " vs Y " + y.shape_string());
  }
  if (a_p.cols() != x.rows()) throw DimensionError("theorem1_error: A_p " + a_p.shape_string());

  const Matrix z = x + y;
  const Matrix t = a_p * x;
  const double t_norm = frobenius_norm(t);
  if (t_norm == 0.0) throw UndefinedRatioError("theorem1_error: A_p X is zero");

  PrincipalAngleReport rep;
  rep.tolerance = tolerance;

  const SvdResult fz = svd(z);
  rep.rank_xy = fz.rank();
  rep.rank_deficient = rep.rank_xy < z.rows();
  if (rep.rank_xy > 0) {
    const double smin = fz.s[rep.rank_xy - 1];
    rep.condition_number = (fz.s.front() * fz.s.front()) / (smin * smin);
  }
  const Matrix vz = right_vectors(fz, rep.rank_xy);

  const SvdResult ft = svd(t);
  const std::size_t rt = ft.rank();
  const Matrix vt = right_vectors(ft, rt);
  rep.sigma.assign(ft.s.begin(), ft.s.begin() + static_cast<std::ptrdiff_t>(rt));

  double total = 0.0;
  for (double s : rep.sigma) total += s * s;

  // Per-direction angles: v'_i against the row space of X + Y.
  double predicted = 0.0;
  rep.angles.resize(rt);
  for (std::size_t i = 0; i < rt; ++i) {
    const Vector v = vt.col(i);
    Vector inside(v.size(), 0.0);
    if (vz.cols() > 0) inside = vz * matvec_t(vz, v);
    const double sin_t = std::min(1.0, norm2(sub(v, inside)));
    const double cos_t = std::min(1.0, norm2(inside));
    rep.angles[i] = std::atan2(sin_t, cos_t);
    predicted += rep.sigma[i] * rep.sigma[i] * sin_t * sin_t;
  }
  rep.predicted_error = predicted / total;

  if (vz.cols() > 0) {
    rep.canonical_angles = principal_angles(vt, vz);
  }
  double canonical = 0.0;
  for (std::size_t i = 0; i < rt; ++i) {
    const double th =
        i < rep.canonical_angles.size() ? rep.canonical_angles[i] : std::acos(0.0);
    const double s = std::sin(th);
    canonical += rep.sigma[i] * rep.sigma[i] * s * s;
  }
  rep.predicted_error_canonical = canonical / total;

  rep.optimal_map = t * pseudo_inverse(z);
  const double resid = frobenius_norm(rep.optimal_map * z - t) / t_norm;
  rep.measured_error = resid * resid;
  rep.abs_gap = std::abs(rep.predicted_error - rep.measured_error);
  return rep;
}

Matrix projection_transfer(const Matrix& a_p, const Matrix& basis_a, const Matrix& basis_b) {
  const std::size_t d = basis_a.rows();
  if (basis_b.rows() != d) throw DimensionError("projection_transfer: ambient dimension mismatch");
  if (a_p.cols() != d) throw DimensionError("projection_transfer: A_p " + a_p.shape_string());
  const Matrix qa = orthonormal_basis(basis_a);
  const Matrix qb = orthonormal_basis(basis_b);
  if (qa.cols() != basis_a.cols() || qb.cols() != basis_b.cols()) {
    throw PreconditionError("projection_transfer: bases must have full column rank");
  }
  if (qa.cols() + qb.cols() > d) {
    throw PreconditionError("projection_transfer: subspaces cannot meet only at 0");
  }
  if (qa.cols() > 0 && qb.cols() > 0) {
    const Vector angles = principal_angles(qa, qb);
    if (!(angles.front() > kMinIntersectionAngle)) {
      throw PreconditionError("projection_transfer: subspaces intersect (smallest angle " +
                              std::to_string(angles.front()) + ")");
    }
  }
  // Coordinates in [A B]; keeping only the B block gives the oblique projector.
  const Matrix c = hstack(basis_a, basis_b);
  const Matrix coords = pseudo_inverse(c);
  const Matrix b_coords = coords.row_block(basis_a.cols(), basis_b.cols());
  return a_p * (basis_b * b_coords);
}

}  // namespace steerkit
