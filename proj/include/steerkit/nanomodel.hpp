#pragma once

// Toy single-block GLU transformer:
//   LN -> single-head attention -> skip -> [LN] -> GLU -> skip
// with every intermediate site recorded in a BlockTrace.

#include <functional>
#include <string>
#include <vector>

#include "steerkit/numkit.hpp"
#include "steerkit/rng.hpp"

namespace steerkit {

inline constexpr std::size_t kMaxDModel = 64;
inline constexpr std::size_t kMaxDMlp = 256;
// LayerNorm refuses inputs whose population std is at or below this.
inline constexpr double kMinLayerNormStd = 1e-12;

enum class Activation { sigmoid, silu, relu, identity };

double activate(Activation phi, double x);
double activate_derivative(Activation phi, double x);
std::string to_string(Activation phi);
Activation activation_from_string(const std::string& name);
// Global Lipschitz constant of phi.
double lipschitz_constant(Activation phi);
// sup |phi(x)|; +infinity when unbounded.
double output_bound(Activation phi);

using Sequence = std::vector<Vector>;

struct GluParams {
  Matrix w_g;  // d_mlp x d_model
  Matrix w_u;  // d_mlp x d_model
  Matrix w_d;  // d_model x d_mlp
  Activation phi = Activation::silu;

  std::size_t d_model() const { return w_g.cols(); }
  std::size_t d_mlp() const { return w_g.rows(); }
  // Throws DimensionError on inconsistent or out-of-range shapes and
  // PreconditionError on non-finite entries.
  void validate() const;
};

struct AttnParams {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;

  std::size_t d_model() const { return w_q.rows(); }
  void validate() const;
};

struct BlockOptions {
  // LayerNorm in front of the GLU.
  bool inner_layernorm = true;
  bool causal = false;
  // Diagnostic mode: the block output is the GLU output alone and post_attn
  // is recorded as zeros.
  bool zero_skip = false;
};

struct BlockTrace {
  Sequence h_in;
  Sequence post_attn;   // h + Attn(h)
  Sequence mlp_in;      // the vector the GLU actually sees
  Sequence post_mlp;    // GLU output alone
  Sequence post_block;  // post_attn + post_mlp

  std::size_t positions() const { return h_in.size(); }
};

// Optional rewrites applied at the three steering loci. Empty functions are
// skipped.
struct BlockHooks {
  std::function<Vector(std::size_t, const Vector&)> pre_mlp;
  std::function<Vector(std::size_t, const Vector&)> post_mlp;
  std::function<Vector(std::size_t, const Vector&)> post_block;
};

// Intermediate GLU quantities at one input.
struct GluState {
  Vector a_g;  // W_g h
  Vector a_u;  // W_u h
  Vector m;    // phi(a_g) .* a_u
  Vector out;  // W_d m
};

GluState glu_state(const GluParams& p, const Vector& h);
Vector glu_forward(const GluParams& p, const Vector& h);

// sqrt(n) * P h / ||P h|| with P the centering projection.
Vector layernorm(const Vector& h);

// Row w holds the softmax weights of query w over all keys (m x m).
Matrix attention_weights(const AttnParams& p, const Sequence& hs, bool causal = false);
// H_w + sum_i a_wi W_v LN(H_i) for every position w.
Sequence attn_forward(const AttnParams& p, const Sequence& hs, bool causal = false);

BlockTrace block_forward(const GluParams& glu, const AttnParams& attn, const Sequence& hs,
                         const BlockOptions& opts = {}, const BlockHooks& hooks = {});

// ||post_mlp|| / ||post_block|| per position. Throws UndefinedRatioError if a
// post_block vector is zero.
Vector mlp_block_ratio(const BlockTrace& trace);

// Entries N(0, scale^2 / fan_in).
GluParams random_glu(Rng& rng, std::size_t d_model, std::size_t d_mlp, Activation phi,
                     double scale = 1.0);
AttnParams random_attn(Rng& rng, std::size_t d_model, double scale = 1.0);

}  // namespace steerkit
