#pragma once

// Dense double-precision linear algebra: the numeric carrier for everything
// else in steerkit plus the decompositions the analysis code relies on (SVD,
// orthonormal bases, principal angles, least squares).
//
// Matrices are row-major. Everything here is a pure function of its inputs and
// is safe to call concurrently.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace steerkit {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of row-major data; throws DimensionError on size mismatch.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<Vector>& rows);
  static Matrix from_columns(const std::vector<Vector>& cols);
  static Matrix diagonal(const Vector& d);
  // Column vector (n x 1).
  static Matrix column(const Vector& v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector row_vector(std::size_t i) const;
  Vector col(std::size_t j) const;
  void set_col(std::size_t j, const Vector& v);
  void set_row(std::size_t i, const Vector& v);

  // Columns [first, first + count).
  Matrix col_block(std::size_t first, std::size_t count) const;
  // Rows [first, first + count).
  Matrix row_block(std::size_t first, std::size_t count) const;

  Matrix transposed() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
// Matrix product (OpenMP kernel).
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, const Vector& x);

// a^T b and a b^T without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Vector matvec_t(const Matrix& a, const Vector& x);

Matrix outer(const Vector& u, const Vector& v);
Matrix hstack(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);
// Largest singular value.
double spectral_norm(const Matrix& a);

// ---- vectors ----
double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double s);
void axpy(double alpha, const Vector& x, Vector& y);
Vector hadamard(const Vector& a, const Vector& b);
double mean(const Vector& a);
// Population standard deviation (divides by n).
double population_std(const Vector& a);
bool all_finite(const Vector& a);

// ---- decompositions ----

// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kRankTolerance = 1e-12;

// Thin SVD a = u * diag(s) * vt with k = min(rows, cols): u is rows x k with
// orthonormal columns, s is non-increasing and >= 0, vt is k x cols.
struct SvdResult {
  Matrix u;
  Vector s;
  Matrix vt;

  // Number of singular values above tol * s_max.
  std::size_t rank(double tol = kRankTolerance) const;
  Matrix reconstruct() const;
};

// One-sided (Hestenes) Jacobi SVD. Deterministic for a fixed input.
// Throws PreconditionError on non-finite input and DecompositionError if the
// sweep cap is reached.
SvdResult svd(const Matrix& a);

// Orthonormal basis (columns) for the column space of a, keeping directions
// with singular value >= tol * s_max. A rank-0 input yields rows x 0.
Matrix orthonormal_basis(const Matrix& a, double tol = kRankTolerance);

// Principal angles between span(q1) and span(q2), both with orthonormal
// columns (checked to 1e-8). Returns min(k1, k2) angles in [0, pi/2], sorted
// non-decreasing. Cosines come from svd(q1^T q2); angles below pi/4 are taken
// from the sines of the projection residual, which keeps small angles accurate.
Vector principal_angles(const Matrix& q1, const Matrix& q2);

// Max-abs deviation of q^T q from the identity.
double orthonormality_error(const Matrix& q);

// Moore-Penrose pseudo-inverse with the kRankTolerance truncation.
Matrix pseudo_inverse(const Matrix& a, double tol = kRankTolerance);

// x minimising ||x a - b||_F (minimum-norm solution when a is rank deficient).
// a is p x n, b is q x n, result is q x p.
Matrix least_squares(const Matrix& a, const Matrix& b);

}  // namespace steerkit
