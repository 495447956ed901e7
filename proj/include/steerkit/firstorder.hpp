#pragma once

// First-order analysis: Jacobians of the GLU and of a plain two-layer MLP,
// and the comparison between the linearised effect of steering the GLU input
// and of fine-tuning its weights.

#include <functional>
#include <optional>

#include "steerkit/adapters.hpp"
#include "steerkit/nanomodel.hpp"
#include "steerkit/numkit.hpp"

namespace steerkit {

// W_d [Diag(phi(a_g)) W_u + Diag(a_u .* phi'(a_g)) W_g] at h.
Matrix glu_jacobian(const GluParams& p, const Vector& h);

// w2 phi(w1 h) and its Jacobian w2 Diag(phi'(w1 h)) w1.
Vector mlp_forward(const Matrix& w1, const Matrix& w2, Activation phi, const Vector& h);
Matrix mlp_jacobian(const Matrix& w1, const Matrix& w2, Activation phi, const Vector& h);

// Central differences, one column per input coordinate.
Matrix central_difference_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& h,
                                   double step = 1e-5);

// ||a - b||_F / ||b||_F with 0/0 = 0.
double relative_error(const Matrix& a, const Matrix& b);

inline const Vector kEpsilonGrid = {1e-1, 1e-2, 1e-3, 1e-4};
inline constexpr double kMaxPerturbationNorm = 1e-1;

struct FirstOrderReport {
  Vector epsilon_grid;
  Vector steer_residual;  // ||exact - linear|| / ||linear|| per epsilon
  Vector ft_residual;
  double mismatch_term_norm = 0.0;  // ||dW_d m|| at the unscaled perturbation
  // Log-log slopes over epsilon <= 1e-2; empty when some residual is zero.
  std::optional<double> steer_slope;
  std::optional<double> ft_slope;
};

// Exact change of the GLU output when the weights move by (dwg, dwu, dwd),
// computed as W_d (m' - m) + dW_d m' so that a pure W_d update is exact.
Vector glu_ft_delta(const GluParams& p, const Vector& h, const Matrix& dwg, const Matrix& dwu,
                    const Matrix& dwd);
// First-order prediction of glu_ft_delta.
Vector glu_ft_linear(const GluParams& p, const Vector& h, const Matrix& dwg, const Matrix& dwu,
                     const Matrix& dwd);

// Each perturbation is scaled by every epsilon in kEpsilonGrid. Perturbation
// norms (Euclidean / Frobenius) must not exceed kMaxPerturbationNorm.
FirstOrderReport steer_vs_ft_expansion(const GluParams& p, const Vector& h, const Vector& dh,
                                       const Matrix& dwg, const Matrix& dwu, const Matrix& dwd);

// Least-squares slope of log(residual) against log(epsilon) over the points
// with epsilon <= 1e-2.
std::optional<double> loglog_slope(const Vector& eps, const Vector& residual);

struct PostMlpFit {
  SteeringAdapter adapter;     // full-matrix post_mlp adapter
  double residual = 0.0;       // relative Frobenius residual of the post-MLP fit
  double pre_mlp_residual = 0.0;  // same data, full-matrix pre-MLP adapter
};

// Fits linear adapters that reproduce the fine-tuning change of the GLU
// output over the sample hs (GLU inputs). The post-MLP adapter is the exact
// least-squares solution; the pre-MLP adapter is solved on the linearised
// model and then scored exactly.
PostMlpFit ft_match_by_postmlp(const GluParams& p, const Matrix& dwg, const Matrix& dwu,
                               const Matrix& dwd, const Sequence& hs);

}  // namespace steerkit
