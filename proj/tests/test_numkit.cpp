#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/numkit.hpp"
#include "steerkit/random.hpp"

using namespace steerkit;

namespace {

Matrix random_rank(Rng& rng, std::size_t m, std::size_t n, std::size_t r) {
  return random_normal(rng, m, r) * random_normal(rng, r, n);
}

}  // namespace

TEST(Matrix, ShapesAndAccess) {
  const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(a.rows(), 2u);
  EXPECT_EQ(a.cols(), 3u);
  EXPECT_EQ(a(1, 2), 6.0);
  EXPECT_EQ(a.transposed()(2, 1), 6.0);
  EXPECT_EQ(a.col(1), (Vector{2, 5}));
  EXPECT_THROW(Matrix(2, 2, Vector{1, 2, 3}), DimensionError);
  EXPECT_THROW(a * a, DimensionError);
}

TEST(Matrix, ProductsAgreeWithNaiveLoops) {
  Rng rng(3);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 5, 2}, {17, 9, 33}, {40, 40, 40}}) {
    const Matrix a = random_normal(rng, m, k);
    const Matrix b = random_normal(rng, k, n);
    EXPECT_LE(max_abs_diff(a * b, oracle::matmul(a, b)), 1e-12);
    EXPECT_LE(max_abs_diff(matmul_tn(a.transposed(), b), oracle::matmul(a, b)), 1e-12);
    EXPECT_LE(max_abs_diff(matmul_nt(a, b.transposed()), oracle::matmul(a, b)), 1e-12);
  }
}

TEST(Matrix, NormsHandValues) {
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::from_rows({{3, 0}, {0, 4}})), 5.0);
  EXPECT_DOUBLE_EQ(norm2(Vector{1e200, 1e200}), std::sqrt(2.0) * 1e200);
  EXPECT_DOUBLE_EQ(spectral_norm(Matrix::from_rows({{3, 0}, {0, 4}})), 4.0);
  EXPECT_DOUBLE_EQ(population_std(Vector{1, 3}), 1.0);
  EXPECT_DOUBLE_EQ(trace(Matrix::identity(5)), 5.0);
}

TEST(Svd, ReconstructsAndIsOrthonormal) {
  Rng rng(11);
  for (auto [m, n] : {std::pair{1, 1}, {5, 3}, {3, 5}, {16, 16}, {40, 7}}) {
    const Matrix a = random_normal(rng, m, n);
    const SvdResult s = svd(a);
    EXPECT_LE(max_abs_diff(s.reconstruct(), a), 1e-12 * std::max(1.0, max_abs(a)));
    EXPECT_LE(orthonormality_error(s.u), 1e-12);
    EXPECT_LE(orthonormality_error(s.vt.transposed()), 1e-12);
    EXPECT_TRUE(std::is_sorted(s.s.rbegin(), s.s.rend()));
  }
}

TEST(Svd, SingularValuesMatchEigenOracle) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 2 + t % 9, n = 2 + (t * 7) % 11;
    const Matrix a = random_normal(rng, m, n);
    const Vector s = svd(a).s;
    const Vector o = oracle::singular_values(a);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], o[i], 1e-8);
  }
}

TEST(Svd, RankDeficientInputs) {
  Rng rng(13);
  const Matrix a = random_rank(rng, 9, 7, 3);
  const SvdResult s = svd(a);
  EXPECT_EQ(s.rank(), 3u);
  EXPECT_LE(orthonormality_error(s.u), 1e-12);
  EXPECT_LE(max_abs_diff(s.reconstruct(), a), 1e-11);
  const SvdResult z = svd(Matrix(4, 3));
  EXPECT_EQ(z.rank(), 0u);
  EXPECT_LE(orthonormality_error(z.u), 1e-12);
}

TEST(Svd, HandValues) {
  const SvdResult s = svd(Matrix::from_rows({{0, 2}, {1, 0}}));
  EXPECT_DOUBLE_EQ(s.s[0], 2.0);
  EXPECT_DOUBLE_EQ(s.s[1], 1.0);
  EXPECT_THROW(svd(Matrix::from_rows({{NAN, 1}})), PreconditionError);
}

TEST(OrthonormalBasis, SpansColumnSpace) {
  Rng rng(14);
  const Matrix a = random_rank(rng, 10, 6, 4);
  const Matrix q = orthonormal_basis(a);
  ASSERT_EQ(q.cols(), 4u);
  EXPECT_LE(orthonormality_error(q), 1e-12);
  const Matrix resid = a - q * matmul_tn(q, a);
  EXPECT_LE(max_abs(resid), 1e-10);
  EXPECT_EQ(orthonormal_basis(Matrix(5, 2)).cols(), 0u);
}

TEST(PrincipalAngles, HandValues) {
  for (double theta : {0.0, 1e-9, 1e-4, 0.3, std::numbers::pi / 4, 1.2, std::numbers::pi / 2}) {
    const Matrix q1 = Matrix::column({1, 0, 0});
    const Matrix q2 = Matrix::column({std::cos(theta), std::sin(theta), 0});
    const Vector a = principal_angles(q1, q2);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_NEAR(a[0], theta, 1e-15 + 1e-15 * theta);
  }
}

TEST(PrincipalAngles, MatchOracles) {
  Rng rng(15);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 8, k1 = 1 + t % 4, k2 = 1 + (t / 4) % 4;
    const Matrix q1 = random_orthonormal(rng, n, k1);
    const Matrix q2 = random_orthonormal(rng, n, k2);
    const Vector a = principal_angles(q1, q2);
    const Vector o = oracle::principal_angles(q1, q2);
    ASSERT_EQ(a.size(), std::min(k1, k2));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], o[i], 1e-7);
    if (k1 == 1) EXPECT_NEAR(a[0], oracle::angle_to_subspace(q1.col(0), q2), 1e-12);
  }
}

TEST(PrincipalAngles, SharedSubspaceGivesZeros) {
  Rng rng(16);
  const Matrix q = random_orthonormal(rng, 6, 3);
  for (double a : principal_angles(q, q)) EXPECT_LE(a, 1e-7);
  EXPECT_THROW(principal_angles(q * 2.0, q), PreconditionError);
}

TEST(PseudoInverse, PenroseConditions) {
  Rng rng(17);
  for (const Matrix& a : {random_normal(rng, 5, 3), random_normal(rng, 3, 5), random_rank(rng, 6, 6, 2)}) {
    const Matrix p = pseudo_inverse(a);
    EXPECT_LE(max_abs_diff(a * p * a, a), 1e-10);
    EXPECT_LE(max_abs_diff(p * a * p, p), 1e-10);
    EXPECT_LE(max_abs_diff((a * p).transposed(), a * p), 1e-10);
    EXPECT_LE(max_abs_diff((p * a).transposed(), p * a), 1e-10);
  }
}

TEST(LeastSquares, MatchesNormalEquations) {
  Rng rng(18);
  const Matrix a = random_normal(rng, 4, 30);
  const Matrix b = random_normal(rng, 3, 30);
  EXPECT_LE(max_abs_diff(least_squares(a, b), oracle::least_squares(a, b)), 1e-10);
}
