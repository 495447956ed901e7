#include <algorithm>
#include <cmath>

#include "steerkit/errors.hpp"
#include "steerkit/numkit.hpp"

namespace steerkit {
namespace {

constexpr double kOrthonormalityTol = 1e-8;

void require_orthonormal(const Matrix& q, const char* name) {
  const double err = orthonormality_error(q);
  if (!(err <= kOrthonormalityTol)) {
    throw PreconditionError(std::string("principal_angles: ") + name +
                            " columns are not orthonormal (error " + std::to_string(err) + ")");
  }
}

}  // namespace

Matrix orthonormal_basis(const Matrix& a, double tol) {
  if (a.cols() == 0 || a.rows() == 0) return Matrix(a.rows(), 0);
  const SvdResult f = svd(a);
  const std::size_t r = f.rank(tol);
  return f.u.col_block(0, r);
}

double orthonormality_error(const Matrix& q) {
  if (q.cols() == 0) return 0.0;
  return max_abs_diff(matmul_tn(q, q), Matrix::identity(q.cols()));
}

Vector principal_angles(const Matrix& q1_in, const Matrix& q2_in) {
  if (q1_in.rows() != q2_in.rows()) {
    throw DimensionError("principal_angles: ambient dimensions " + q1_in.shape_string() + " vs " +
                         q2_in.shape_string());
  }
  require_orthonormal(q1_in, "q1");
  require_orthonormal(q2_in, "q2");
  const bool swap = q1_in.cols() < q2_in.cols();
  const Matrix& q1 = swap ? q2_in : q1_in;
  const Matrix& q2 = swap ? q1_in : q2_in;
  const std::size_t k = q2.cols();
  if (k == 0) return {};

  const Matrix m = matmul_tn(q1, q2);  // k1 x k
  Vector cosines = svd(m).s;           // descending
  const Matrix resid = q2 - q1 * m;    // (I - q1 q1^T) q2
  Vector sines = svd(resid).s;         // descending
  std::reverse(sines.begin(), sines.end());

  Vector angles(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double c = std::clamp(cosines[i], 0.0, 1.0);
    if (c * c < 0.5) {
      angles[i] = std::acos(c);
    } else {
      angles[i] = std::asin(std::clamp(sines[i], 0.0, 1.0));
    }
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

Matrix pseudo_inverse(const Matrix& a, double tol) {
  const SvdResult f = svd(a);
  const std::size_t r = f.rank(tol);
  // a^+ = V_r diag(1/s) U_r^T
  Matrix vs(a.cols(), r);
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < r; ++j) vs(i, j) = f.vt(j, i) / f.s[j];
  }
  return matmul_nt(vs, f.u.col_block(0, r));
}

Matrix least_squares(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("least_squares: " + a.shape_string() + " vs " + b.shape_string());
  }
  return b * pseudo_inverse(a);
}

}  // namespace steerkit
