#include <gtest/gtest.h>

#include "oracles.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/firstorder.hpp"
#include "steerkit/random.hpp"

using namespace steerkit;

namespace {

Matrix with_norm(Matrix m, double n) { return m * (n / frobenius_norm(m)); }

}  // namespace

TEST(Jacobian, GluMatchesFiniteDifferences) {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const std::size_t d = 2 + t % 12, dm = 3 + t % 17;
    const Activation phi = t % 2 ? Activation::silu : Activation::sigmoid;
    const GluParams p = random_glu(rng, d, dm, phi);
    const Vector h = random_normal_vector(rng, d);
    const Matrix fd = oracle::fd_jacobian([&](const Vector& x) { return glu_forward(p, x); }, h, 1e-5);
    EXPECT_LE(oracle::rel(glu_jacobian(p, h), fd), 1e-8);
  }
}

TEST(Jacobian, MlpMatchesFiniteDifferences) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const std::size_t d = 2 + t % 10, dm = 2 + t % 13;
    const Matrix w1 = random_normal(rng, dm, d), w2 = random_normal(rng, d, dm);
    const Vector h = random_normal_vector(rng, d);
    const Matrix fd = oracle::fd_jacobian(
        [&](const Vector& x) { return mlp_forward(w1, w2, Activation::silu, x); }, h, 1e-5);
    EXPECT_LE(oracle::rel(mlp_jacobian(w1, w2, Activation::silu, h), fd), 1e-8);
  }
}

TEST(Jacobian, IdentityActivationIsExactProduct) {
  Rng rng(3);
  const Matrix w1 = random_normal(rng, 5, 4), w2 = random_normal(rng, 4, 5);
  const Matrix j = mlp_jacobian(w1, w2, Activation::identity, random_normal_vector(rng, 4));
  EXPECT_LE(max_abs_diff(j, oracle::matmul(w2, w1)), 1e-13);
}

TEST(CentralDifference, ExactOnQuadratics) {
  const Matrix j = central_difference_jacobian(
      [](const Vector& x) { return Vector{x[0] * x[0], 3.0 * x[1]}; }, {2.0, 5.0}, 1e-3);
  EXPECT_NEAR(j(0, 0), 4.0, 1e-9);
  EXPECT_NEAR(j(1, 1), 3.0, 1e-9);
  EXPECT_NEAR(j(0, 1), 0.0, 1e-12);
  EXPECT_EQ(relative_error(Matrix(2, 2), Matrix(2, 2)), 0.0);
}

TEST(Expansion, FtDeltaIsExactChange) {
  Rng rng(4);
  const GluParams p = random_glu(rng, 6, 10, Activation::silu);
  const Vector h = random_normal_vector(rng, 6);
  const Matrix dwg = random_normal(rng, 10, 6, 0.1), dwu = random_normal(rng, 10, 6, 0.1),
               dwd = random_normal(rng, 6, 10, 0.1);
  GluParams q = p;
  q.w_g += dwg;
  q.w_u += dwu;
  q.w_d += dwd;
  const Vector want = sub(glu_forward(q, h), glu_forward(p, h));
  const Vector got = glu_ft_delta(p, h, dwg, dwu, dwd);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-13);
}

TEST(Expansion, DwdOnlyIsExactAndSlopesNearOne) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const GluParams p = random_glu(rng, 8, 16, Activation::silu);
    const Vector h = random_normal_vector(rng, 8);
    const Vector dh = scaled(random_unit_vector(rng, 8), 0.05);
    const Matrix dwg = with_norm(random_normal(rng, 16, 8), 0.05);
    const Matrix dwu = with_norm(random_normal(rng, 16, 8), 0.05);
    const Matrix dwd = with_norm(random_normal(rng, 8, 16), 0.05);
    const FirstOrderReport r = steer_vs_ft_expansion(p, h, dh, dwg, dwu, dwd);
    ASSERT_TRUE(r.steer_slope && r.ft_slope);
    EXPECT_GE(*r.steer_slope, 0.9);
    EXPECT_GE(*r.ft_slope, 0.9);
    EXPECT_EQ(r.epsilon_grid, kEpsilonGrid);
    const FirstOrderReport e = steer_vs_ft_expansion(p, h, dh, Matrix(16, 8), Matrix(16, 8), dwd);
    for (double x : e.ft_residual) EXPECT_LE(x, 1e-12);
    EXPECT_FALSE(e.ft_slope.has_value());
    EXPECT_NEAR(r.mismatch_term_norm, norm2(dwd * glu_state(p, h).m), 1e-14);
  }
}

TEST(Expansion, RejectsLargePerturbations) {
  Rng rng(6);
  const GluParams p = random_glu(rng, 4, 8, Activation::silu);
  const Vector h = random_normal_vector(rng, 4);
  EXPECT_THROW(steer_vs_ft_expansion(p, h, Vector(4, 1.0), Matrix(8, 4), Matrix(8, 4), Matrix(4, 8)),
               PreconditionError);
}

TEST(LogLogSlope, HandValues) {
  const Vector eps = {1e-1, 1e-2, 1e-3, 1e-4};
  const auto s = loglog_slope(eps, {1.0, 0.5e-1, 0.5e-2, 0.5e-3});
  ASSERT_TRUE(s);
  EXPECT_NEAR(*s, 1.0, 1e-12);
  const auto q = loglog_slope(eps, {1.0, 1e-4, 1e-6, 1e-8});
  EXPECT_NEAR(*q, 2.0, 1e-12);
  EXPECT_FALSE(loglog_slope(eps, {1.0, 0.0, 1e-3, 1e-4}).has_value());
}

TEST(FtMatch, SquareWdUpdateIsMatchedExactlyAfterTheMlp) {
  Rng rng(7);
  const GluParams p = random_glu(rng, 6, 6, Activation::silu);
  Sequence hs;
  for (int i = 0; i < 40; ++i) hs.push_back(random_normal_vector(rng, 6));
  const Matrix dwd = with_norm(random_normal(rng, 6, 6), 0.01);
  const PostMlpFit f = ft_match_by_postmlp(p, Matrix(6, 6), Matrix(6, 6), dwd, hs);
  EXPECT_LE(f.residual, 1e-10);
  EXPECT_EQ(f.adapter.locus, Locus::post_mlp);
  EXPECT_LE(max_abs_diff(f.adapter.m * p.w_d, dwd), 1e-10);
}
