#include "steerkit/feature_model.hpp"

#include "steerkit/errors.hpp"

namespace steerkit {

void FeatureModel::validate() const {
  if (f.cols() != x.cols()) throw DimensionError("feature model: X and F sample counts differ");
  if (w.rows() != x.rows() || w.cols() != f.rows()) {
    throw DimensionError("feature model: W is " + w.shape_string() + ", expected " +
                         std::to_string(x.rows()) + "x" + std::to_string(f.rows()));
  }
  if (!x.all_finite() || !f.all_finite() || !w.all_finite()) {
    throw PreconditionError("feature model: non-finite entries");
  }
}

Matrix FeatureModel::base_output() const { return x + w * f; }

FeatureEval evaluate_feature_model(const FeatureModel& fm, const Matrix& g, const Matrix& dh,
                                   const Matrix& dw) {
  const std::size_t d = fm.dim();
  if (g.rows() != d || g.cols() != fm.samples()) throw DimensionError("feature model: target shape");
  if (dh.rows() != d || dh.cols() != d) throw DimensionError("feature model: dh shape");
  if (dw.rows() != fm.w.rows() || dw.cols() != fm.w.cols()) {
    throw DimensionError("feature model: dW shape");
  }
  const Matrix y = fm.x + (fm.w + dw) * fm.f;
  const Matrix gate = Matrix::identity(d) + dh;
  FeatureEval e;
  e.output = gate * y;
  e.resid = g - e.output;
  const double fn = frobenius_norm(e.resid);
  e.loss = 0.5 * fn * fn;
  e.grad_dh = matmul_nt(e.resid, y) * -1.0;
  e.grad_dw = matmul_nt(matmul_tn(gate, e.resid), fm.f) * -1.0;
  return e;
}

}  // namespace steerkit
