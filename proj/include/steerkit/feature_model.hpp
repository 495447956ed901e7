#pragma once

// Matrix-level model of a jointly adapted layer:
//   g_hat = (I + dh) (X + (W + dW) F)
// X is d x N (inputs as columns), F is p x N (features), W is d x p.
// dh is the activation-space update, dW the weight-space update.

#include "steerkit/numkit.hpp"

namespace steerkit {

struct FeatureModel {
  Matrix x;
  Matrix f;
  Matrix w;

  std::size_t dim() const { return x.rows(); }
  std::size_t features() const { return f.rows(); }
  std::size_t samples() const { return x.cols(); }
  void validate() const;
  // X + W F
  Matrix base_output() const;
};

struct FeatureEval {
  Matrix output;  // g_hat
  Matrix resid;   // G - g_hat
  double loss;    // 0.5 ||resid||_F^2
  Matrix grad_dh;  // dL/d dh = -R Y'^T, Y' = X + (W + dW) F
  Matrix grad_dw;  // dL/d dW = -(I + dh)^T R F^T
};

FeatureEval evaluate_feature_model(const FeatureModel& fm, const Matrix& g, const Matrix& dh,
                                   const Matrix& dw);

}  // namespace steerkit
