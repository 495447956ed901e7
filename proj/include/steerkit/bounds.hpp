#pragma once

// Error-propagation bounds for LayerNorm, linear maps, the layer-normed GLU
// with skip, and single-head attention, plus random scans that compare the
// actual output distance (lhs) against each bound (rhs).

#include <cstdint>
#include <limits>
#include <string>

#include "steerkit/nanomodel.hpp"
#include "steerkit/numkit.hpp"

namespace steerkit {

inline constexpr double kInfiniteBound = std::numeric_limits<double>::infinity();
// A trial violates its bound when lhs > rhs * (1 + kBoundSlack).
inline constexpr double kBoundSlack = 1e-9;

enum class Lemma { layernorm, linear, glu_general, glu_sigmoid, attention };

std::string to_string(Lemma lemma);
Lemma lemma_from_string(const std::string& name);

struct BoundValue {
  double lhs = 0.0;
  double rhs = 0.0;
  // lhs / rhs, 0 when lhs = 0, +inf when only rhs = 0.
  double ratio() const;
  bool violated() const { return lhs > rhs * (1.0 + kBoundSlack); }
};

// ||LN(h) - LN(h')|| <= eps / min(std h, std h').
BoundValue layernorm_bound(const Vector& h, const Vector& h_prime, double eps);

// ||W h - W' h'|| <= ||W||_2 eps + sqrt(n) delta, for ||h|| = ||h'|| = sqrt(n).
BoundValue linear_bound(const Matrix& w, const Matrix& w_prime, const Vector& h,
                        const Vector& h_prime, double eps, double delta);

// y(h) = h + GLU(LN(h)). The rhs uses s = min(std h, std h'), the Lipschitz
// constant L of phi and |phi| <= bound_b (kInfiniteBound allowed).
BoundValue glu_bound(const GluParams& p, const GluParams& p_prime, const Vector& h,
                     const Vector& h_prime, double eps, double delta, double lipschitz,
                     double bound_b);
// Simplified form for phi = sigmoid (L = 1/4, B = 1).
BoundValue glu_sigmoid_bound(const GluParams& p, const GluParams& p_prime, const Vector& h,
                             const Vector& h_prime, double eps, double delta);

struct AttentionBound {
  BoundValue composite;  // expanded bound with the query/key cross terms
  // Short form eps + ||W_v|| sqrt(n) ||a - a'||_1 + ||W_v|| eps / s + delta sqrt(n),
  // evaluated with the actual attention weights.
  BoundValue statement;
  // ||a - a'||_1 against half the l1 distance of the logits.
  BoundValue softmax;
  double s = 0.0;  // min std over all positions of both sequences
};

// Distance of the attention output at position w (default: last).
AttentionBound attention_bound(const AttnParams& p, const AttnParams& p_prime, const Sequence& hs,
                               const Sequence& hs_prime, double eps, double delta,
                               std::size_t position = SIZE_MAX);

struct BoundScanOptions {
  std::size_t trials = 1000;
  Vector eps_values = {1e-3, 1e-2};
  Vector delta_values = {1e-3, 1e-2};
  std::size_t min_dim = 2;
  std::size_t max_dim = 16;
  std::size_t max_mlp = 32;
  std::size_t max_positions = 6;
};

struct BoundCheckReport {
  Lemma lemma = Lemma::layernorm;
  std::size_t trials = 0;
  double max_lhs_over_rhs = 0.0;
  std::size_t violations = 0;
  double max_lhs = 0.0;
  // Attention only: trials where the short statement form or the softmax
  // sub-bound fails.
  std::size_t statement_violations = 0;
  std::size_t sub_bound_violations = 0;
  double max_statement_ratio = 0.0;
  Vector ratios;  // per trial, in trial order
};

// Random valid instances; trial t uses stream (seed, lemma).split(t), so the
// report does not depend on thread scheduling.
BoundCheckReport scan_bound(Lemma lemma, std::uint64_t seed, const BoundScanOptions& opts = {});

}  // namespace steerkit
