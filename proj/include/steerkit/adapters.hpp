#pragma once

// Steering adapters (activation-space interventions at a block locus), LoRA
// style weight updates, and the joint adapter with its orthogonality
// projection.

#include <string>
#include <vector>

#include "steerkit/nanomodel.hpp"
#include "steerkit/numkit.hpp"
#include "steerkit/rng.hpp"

namespace steerkit {

enum class Locus { pre_mlp, post_mlp, post_block };
enum class AdapterKind { full, bottleneck, rank1, vector };

std::string to_string(Locus locus);
std::string to_string(AdapterKind kind);
Locus locus_from_string(const std::string& name);
AdapterKind adapter_kind_from_string(const std::string& name);

struct SteeringAdapter {
  Locus locus = Locus::post_block;
  AdapterKind kind = AdapterKind::vector;
  Matrix m;                              // full: d x d
  Matrix w1;                             // bottleneck: r x d
  Matrix w2;                             // bottleneck: d x r
  Activation phi = Activation::identity;  // bottleneck nonlinearity (identity | silu)
  Vector u;                              // rank1
  Vector v;                              // rank1, vector

  std::size_t dim() const;
  std::size_t rank() const;  // bottleneck width; 1 for rank1/vector, d for full
  void validate() const;
  // Vector adapters before the MLP are allowed but outside the usual setup.
  bool non_canonical() const { return kind == AdapterKind::vector && locus == Locus::pre_mlp; }

  // adapter(h) - h
  Vector shift(const Vector& h) const;

  // Flat parameter view used by the trainer. Order: full m; bottleneck w1
  // then w2; rank1 u then v; vector v.
  std::size_t param_count() const;
  Vector flatten() const;
  void unflatten(const Vector& theta);

  // All-zero parameters (the identity map).
  static SteeringAdapter zeros(Locus locus, AdapterKind kind, std::size_t d, std::size_t r = 1,
                               Activation phi = Activation::identity);
  // Identity at init: output factors (w2, u) zero, input factors uniform in
  // +-1/sqrt(d).
  static SteeringAdapter initialized(Locus locus, AdapterKind kind, std::size_t d, std::size_t r,
                                     Activation phi, Rng& rng);
};

// full: h + M h; bottleneck: h + w2 phi(w1 h); rank1: h + u (v.h); vector: h + v.
Vector apply_steering(const SteeringAdapter& ad, const Vector& h);

// Reverse mode through h -> apply_steering(ad, h). Adds dL/dtheta (flat
// order) into param_grad and returns dL/dh.
Vector steering_backward(const SteeringAdapter& ad, const Vector& h, const Vector& upstream,
                         std::span<double> param_grad);

enum class WeightTarget { w_g, w_u, w_d };

std::string to_string(WeightTarget target);
WeightTarget weight_target_from_string(const std::string& name);

struct WeightUpdate {
  WeightTarget target = WeightTarget::w_d;
  Matrix b;  // out x r
  Matrix a;  // r x in
  double scale = 1.0;

  std::size_t rank() const { return b.cols(); }
  // scale * b * a
  Matrix delta() const;

  static WeightUpdate initialized(WeightTarget target, std::size_t out, std::size_t in,
                                  std::size_t r, Rng& rng);
};

// Copy of p with the targeted weight shifted by w.delta().
GluParams apply_weight_update(const GluParams& p, const WeightUpdate& w);
Matrix& target_weight(GluParams& p, WeightTarget target);
const Matrix& target_weight(const GluParams& p, WeightTarget target);

struct JointAdapter {
  SteeringAdapter steer;  // post_block bottleneck
  WeightUpdate wupd;
  bool orth_enabled = true;

  // max |<w2_i, b_j>| / (||w2_i|| ||b_j||) over nonzero columns.
  double max_normalized_overlap() const;
};

// (I - V V^T) w with V an orthonormal basis of colspace(basis_of).
Matrix project_out(const Matrix& w, const Matrix& basis_of);

// Replaces steer.w2 by its component orthogonal to colspace(wupd.b).
// Throws PreconditionError unless orth_enabled.
JointAdapter project_orthogonal(const JointAdapter& j);

// Block forward with weight updates applied first and each adapter inserted
// at its locus. Two adapters on one locus is a ConfigurationError.
BlockTrace steered_block_forward(const GluParams& glu, const AttnParams& attn,
                                 const std::vector<SteeringAdapter>& adapters,
                                 const std::vector<WeightUpdate>& wupds, const Sequence& hs,
                                 const BlockOptions& opts = {});

}  // namespace steerkit
