#pragma once

// Subspace analysis: fine-tuning oracles, the post-block vs post-MLP optimal
// linear error, the oblique-projection transfer map, collapse dynamics of
// joint activation/weight updates, and the shift cosine diagnostic.

#include <string>
#include <vector>

#include "steerkit/adapters.hpp"
#include "steerkit/feature_model.hpp"
#include "steerkit/nanomodel.hpp"
#include "steerkit/numkit.hpp"
#include "steerkit/rng.hpp"

namespace steerkit {

enum class TraceSite { h_in, post_attn, mlp_in, post_mlp, post_block };

std::string to_string(TraceSite site);
TraceSite trace_site_from_string(const std::string& name);
const Sequence& site_values(const BlockTrace& t, TraceSite site);

struct OracleTarget {
  TraceSite site = TraceSite::post_block;
  Sequence delta;  // ft - base per position
};

OracleTarget compute_oracle(const BlockTrace& base, const BlockTrace& ft, TraceSite site);

struct PrincipalAngleReport {
  Vector sigma;  // singular values of A_p X (nonzero part)
  // theta_i: angle between the i-th right singular vector of A_p X and the
  // row space of X + Y. These are the angles for which the error formula is
  // an identity.
  Vector angles;
  // Canonical principal angles between the two right-singular subspaces.
  Vector canonical_angles;
  double predicted_error = 0.0;  // sum sigma_i^2 sin^2 theta_i / sum sigma_j^2
  // Same formula with canonical angles (ascending) paired with sigma
  // (descending); never above predicted_error.
  double predicted_error_canonical = 0.0;
  double measured_error = 0.0;  // from the closed-form minimiser
  double abs_gap = 0.0;
  double tolerance = 1e-8;
  std::size_t rank_xy = 0;
  bool rank_deficient = false;  // (X+Y)(X+Y)^T singular; pseudo-inverse used
  double condition_number = 0.0;  // of (X+Y)(X+Y)^T on its support
  Matrix optimal_map;           // A = A_p X (X+Y)^+
};

// min_A ||A (X+Y) - A_p X||_F^2 / ||A_p X||_F^2 two ways. Throws
// UndefinedRatioError when A_p X = 0.
PrincipalAngleReport theorem1_error(const Matrix& x, const Matrix& y, const Matrix& a_p,
                                    double tolerance = 1e-8);

// A_p P_B where P_B projects onto span(B) along span(A). Throws
// PreconditionError unless the spans meet only at 0 (smallest principal
// angle > 1e-6).
Matrix projection_transfer(const Matrix& a_p, const Matrix& basis_a, const Matrix& basis_b);

struct CollapseOptions {
  std::size_t steps = 100;
  double lr = 1e-3;
  bool with_orth = false;
  // Number of leading left singular directions of dW removed from dh after
  // each step when with_orth is set.
  std::size_t orth_rank = 1;
  std::size_t gram_k = 8;
  // ||dh||_F and ||dW||_F must stay within this fraction of ||W||_F.
  double norm_guard = 0.1;
  double blowup_factor = 10.0;
};

struct CollapseReport {
  Matrix gram;  // k x k, <top_i(dh), top_j(dW)>
  std::size_t k = 0;
  double diag_mass = 0.0;
  double offdiag_mass = 0.0;
  double top_overlap = 0.0;  // |gram(0, 0)|
  Vector loss_curve;         // 0.5 ||R||_F^2 before each step and after the last
  Matrix dh;
  Matrix dw;
  // max over steps of ||(I - U U^T) dh|| / ||dh|| with U spanning colspace(X + W F)
  double containment_dh = 0.0;
  double containment_dw = 0.0;
  double max_update_ratio = 0.0;  // max(||dh||, ||dW||) / ||W||
};

// Gradient descent on 0.5 ||G - (I + dh)(X + (W + dW) F)||_F^2 from zero.
// Throws InstabilityError if the loss exceeds blowup_factor times its initial
// value (or turns non-finite) and PreconditionError if the norm guard trips.
CollapseReport simulate_collapse(const FeatureModel& fm, const Matrix& g_target,
                                 const CollapseOptions& opts);

// Gram of the top-k left singular vectors of a against those of b, with
// k = min(k_max, rank a, rank b).
Matrix top_singular_gram(const Matrix& a, const Matrix& b, std::size_t k_max);

// Instance where the residual has a dominant rank-1 direction u1 and a weak
// secondary direction u2, constructed so that both gradients share u1.
struct CollapseCase {
  FeatureModel model;
  Matrix target;
  Vector u1;
  Vector u2;
};

CollapseCase make_collapse_case(Rng& rng, std::size_t d = 8, std::size_t p = 8,
                                std::size_t n = 64, double primary = 0.5,
                                double secondary = 0.01);

// Cosine between two shifts; throws UndefinedRatioError on a zero shift.
double shift_cosine(const Vector& adapter_shift, const Vector& weight_shift);
// GLU output with the update minus without it, at identical input.
Vector weight_shift(const GluParams& p, const WeightUpdate& w, const Vector& h);
// Per-position cosine between the adapter's shift at its locus and the GLU
// weight shift along a base trace.
Vector trace_shift_cosines(const BlockTrace& base, const GluParams& p,
                           const SteeringAdapter& adapter, const WeightUpdate& w);

}  // namespace steerkit
