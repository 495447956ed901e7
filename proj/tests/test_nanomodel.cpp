#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/nanomodel.hpp"
#include "steerkit/random.hpp"

using namespace steerkit;

namespace {

Sequence random_sequence(Rng& rng, std::size_t m, std::size_t d) {
  Sequence s;
  for (std::size_t i = 0; i < m; ++i) s.push_back(random_normal_vector(rng, d));
  return s;
}

}  // namespace

TEST(Activation, HandValues) {
  EXPECT_DOUBLE_EQ(activate(Activation::sigmoid, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(activate(Activation::silu, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(activate(Activation::relu, -2.0), 0.0);
  EXPECT_DOUBLE_EQ(activate(Activation::relu, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(activate(Activation::identity, -3.5), -3.5);
  EXPECT_DOUBLE_EQ(activate_derivative(Activation::sigmoid, 0.0), 0.25);
  EXPECT_DOUBLE_EQ(activate_derivative(Activation::silu, 0.0), 0.5);
  EXPECT_NEAR(activate(Activation::silu, 1.3), oracle::silu(1.3), 1e-15);
  EXPECT_DOUBLE_EQ(lipschitz_constant(Activation::sigmoid), 0.25);
  EXPECT_DOUBLE_EQ(output_bound(Activation::sigmoid), 1.0);
  EXPECT_TRUE(std::isinf(output_bound(Activation::silu)));
  EXPECT_EQ(activation_from_string(to_string(Activation::silu)), Activation::silu);
  EXPECT_THROW(activation_from_string("gelu"), ConfigurationError);
}

TEST(Activation, DerivativesMatchDifferences) {
  for (Activation phi : {Activation::sigmoid, Activation::silu, Activation::identity}) {
    for (double x = -6.0; x <= 6.0; x += 0.37) {
      const double h = 1e-6;
      const double fd = (activate(phi, x + h) - activate(phi, x - h)) / (2 * h);
      EXPECT_NEAR(activate_derivative(phi, x), fd, 1e-8);
    }
  }
}

TEST(Activation, SiluLipschitzConstantIsSupOfDerivative) {
  double best = 0.0;
  for (double x = -10.0; x <= 10.0; x += 1e-4) {
    best = std::max(best, std::abs(activate_derivative(Activation::silu, x)));
  }
  EXPECT_NEAR(lipschitz_constant(Activation::silu), best, 1e-8);
  EXPECT_GE(lipschitz_constant(Activation::silu), best);
}

TEST(LayerNorm, MatchesOracleAndIsIdempotent) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Vector h = random_normal_vector(rng, 2 + t);
    const Vector y = layernorm(h);
    const Vector o = oracle::layernorm(h);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(y[i], o[i], 1e-13);
    EXPECT_NEAR(norm2(y), std::sqrt(static_cast<double>(h.size())), 1e-12);
    const Vector yy = layernorm(y);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(yy[i], y[i], 1e-10);
  }
  EXPECT_THROW(layernorm({1.0}), DimensionError);
  EXPECT_THROW(layernorm({2.0, 2.0, 2.0}), DegenerateInputError);
}

TEST(Attention, RowsSumToOne) {
  Rng rng(2);
  const AttnParams p = random_attn(rng, 6);
  const Sequence hs = random_sequence(rng, 5, 6);
  for (bool causal : {false, true}) {
    const Matrix a = attention_weights(p, hs, causal);
    for (std::size_t w = 0; w < 5; ++w) {
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_GE(a(w, i), 0.0);
        if (causal && i > w) EXPECT_EQ(a(w, i), 0.0);
        s += a(w, i);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Attention, MatchesHandComputation) {
  Rng rng(3);
  const std::size_t d = 4, m = 3;
  const AttnParams p = random_attn(rng, d);
  const Sequence hs = random_sequence(rng, m, d);
  std::vector<Vector> ln;
  for (const auto& h : hs) ln.push_back(oracle::layernorm(h));
  const Sequence out = attn_forward(p, hs);
  for (std::size_t w = 0; w < m; ++w) {
    const Vector q = oracle::matvec(p.w_q, ln[w]);
    Vector logits(m);
    for (std::size_t i = 0; i < m; ++i) {
      const Vector k = oracle::matvec(p.w_k, ln[i]);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += q[j] * k[j];
      logits[i] = s / std::sqrt(static_cast<double>(d));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    Vector want = hs[w];
    for (std::size_t i = 0; i < m; ++i) {
      const Vector v = oracle::matvec(p.w_v, ln[i]);
      for (std::size_t j = 0; j < d; ++j) want[j] += logits[i] / z * v[j];
    }
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(out[w][j], want[j], 1e-12);
  }
}

TEST(Glu, MatchesHandComputation) {
  Rng rng(4);
  const GluParams p = random_glu(rng, 5, 7, Activation::silu);
  const Vector h = random_normal_vector(rng, 5);
  const Vector ag = oracle::matvec(p.w_g, h), au = oracle::matvec(p.w_u, h);
  Vector m(7);
  for (std::size_t i = 0; i < 7; ++i) m[i] = oracle::silu(ag[i]) * au[i];
  const Vector want = oracle::matvec(p.w_d, m);
  const Vector got = glu_forward(p, h);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(got[i], want[i], 1e-13);
}

TEST(Block, TraceIdentityAndSites) {
  Rng rng(5);
  const GluParams g = random_glu(rng, 8, 16, Activation::silu);
  const AttnParams a = random_attn(rng, 8);
  const Sequence hs = random_sequence(rng, 4, 8);
  const BlockTrace t = block_forward(g, a, hs);
  ASSERT_EQ(t.positions(), 4u);
  const Sequence pa = attn_forward(a, hs);
  for (std::size_t w = 0; w < 4; ++w) {
    EXPECT_EQ(t.post_attn[w], pa[w]);
    EXPECT_EQ(t.mlp_in[w], layernorm(pa[w]));
    EXPECT_EQ(t.post_mlp[w], glu_forward(g, t.mlp_in[w]));
    EXPECT_LE(norm2(sub(t.post_block[w], add(t.post_attn[w], t.post_mlp[w]))), 1e-15);
  }
  BlockOptions raw;
  raw.inner_layernorm = false;
  EXPECT_EQ(block_forward(g, a, hs, raw).mlp_in[0], pa[0]);
}

TEST(Block, ZeroWeightsGiveSkipPaths) {
  Rng rng(6);
  GluParams g = random_glu(rng, 6, 12, Activation::silu);
  AttnParams a = random_attn(rng, 6);
  const Sequence hs = random_sequence(rng, 3, 6);
  GluParams gz = g;
  gz.w_g = Matrix(12, 6);
  gz.w_u = Matrix(12, 6);
  gz.w_d = Matrix(6, 12);
  AttnParams az = a;
  az.w_v = Matrix(6, 6);
  const BlockTrace t = block_forward(gz, az, hs);
  for (std::size_t w = 0; w < 3; ++w) EXPECT_EQ(t.post_block[w], hs[w]);
  for (double r : mlp_block_ratio(block_forward(gz, a, hs))) EXPECT_EQ(r, 0.0);
  BlockOptions zs;
  zs.zero_skip = true;
  for (double r : mlp_block_ratio(block_forward(g, a, hs, zs))) EXPECT_NEAR(r, 1.0, 1e-15);
}

TEST(Block, WdScalingIsLinear) {
  Rng rng(7);
  const GluParams g = random_glu(rng, 6, 12, Activation::silu);
  const AttnParams a = random_attn(rng, 6);
  const Sequence hs = random_sequence(rng, 3, 6);
  GluParams g2 = g;
  g2.w_d *= -2.5;
  const BlockTrace t1 = block_forward(g, a, hs), t2 = block_forward(g2, a, hs);
  for (std::size_t w = 0; w < 3; ++w) {
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(t2.post_mlp[w][i], -2.5 * t1.post_mlp[w][i], 1e-14);
  }
}

TEST(Block, RatioMatchesNormOracle) {
  Rng rng(8);
  const GluParams g = random_glu(rng, 8, 16, Activation::silu);
  const AttnParams a = random_attn(rng, 8);
  const BlockTrace t = block_forward(g, a, random_sequence(rng, 5, 8));
  const Vector r = mlp_block_ratio(t);
  for (std::size_t w = 0; w < 5; ++w) {
    EXPECT_NEAR(r[w], oracle::vnorm(t.post_mlp[w]) / oracle::vnorm(t.post_block[w]), 1e-15);
    EXPECT_GE(r[w], 0.0);
  }
  BlockTrace zero = t;
  zero.post_block[2] = Vector(8, 0.0);
  EXPECT_THROW(mlp_block_ratio(zero), UndefinedRatioError);
}

TEST(Block, RejectsBadShapes) {
  Rng rng(9);
  GluParams g = random_glu(rng, 4, 8, Activation::silu);
  const AttnParams a = random_attn(rng, 4);
  EXPECT_THROW(block_forward(g, a, random_sequence(rng, 2, 5)), DimensionError);
  g.w_d = Matrix(4, 7);
  EXPECT_THROW(g.validate(), DimensionError);
  EXPECT_THROW(random_glu(rng, 65, 8, Activation::silu).validate(), DimensionError);
  EXPECT_THROW(random_glu(rng, 8, 257, Activation::silu).validate(), DimensionError);
}

TEST(Block, HooksRewriteLoci) {
  Rng rng(10);
  const GluParams g = random_glu(rng, 4, 8, Activation::silu);
  const AttnParams a = random_attn(rng, 4);
  const Sequence hs = random_sequence(rng, 2, 4);
  BlockHooks hooks;
  hooks.post_block = [](std::size_t, const Vector& v) { return scaled(v, 2.0); };
  const BlockTrace base = block_forward(g, a, hs);
  const BlockTrace t = block_forward(g, a, hs, {}, hooks);
  for (std::size_t w = 0; w < 2; ++w) EXPECT_EQ(t.post_block[w], scaled(base.post_block[w], 2.0));
}
