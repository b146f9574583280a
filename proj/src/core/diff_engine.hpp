#pragma once

#include <vector>

#include "core/linalg.hpp"
#include "core/network.hpp"

namespace cpinn {

// Network output together with its first and diagonal-second input
// derivatives, as needed by the PDE residual operators.
struct DualTriple {
  double value = 0.0;
  Vec grad;       // du/dx_i
  Vec hess_diag;  // d2u/dx_i^2
};

enum class DerivOrder { value, first, second };

struct BatchDerivs {
  RowVec value;   // 1 x N
  Mat grad;       // d x N (first/second order only)
  Mat hess_diag;  // d x N (second order only)
};

// Layer-by-layer propagation of (value, grad, hess_diag) streams through
// affine + tanh, with the matching reverse sweep for parameter gradients.
// Cross second derivatives are not propagated; no benchmark operator needs
// them. One engine per thread; forward caches feed the next backward.
class MlpDerivEngine {
 public:
  explicit MlpDerivEngine(const MlpParameters& params);

  void forward(const Mat& X, DerivOrder order);

  const RowVec& value() const { return value_; }
  const Mat& input_grad() const { return out_grad_; }
  const Mat& input_hess_diag() const { return out_hess_; }

  // Accumulates d(loss)/d(params) into flat_grad (canonical layout) given
  // per-point adjoints of the forward outputs. grad_bar/hess_bar may be
  // null when the corresponding stream was not requested.
  void backward(const RowVec& value_bar, const Mat* grad_bar, const Mat* hess_bar,
                Vec& flat_grad);

 private:
  const MlpParameters* params_;
  DerivOrder order_ = DerivOrder::value;
  Eigen::Index n_ = 0;

  std::vector<Mat> acts_;               // acts_[0] = X, then hidden tanh outputs
  std::vector<std::vector<Mat>> gz_;    // per layer, per input dim: first-deriv pre-activations
  std::vector<std::vector<Mat>> hz_;    // per layer, per input dim: second-deriv pre-activations
  RowVec value_;
  Mat out_grad_, out_hess_;
};

// Single-point contract used by residual evaluation and the tests.
DualTriple eval_with_input_derivs(const MlpParameters& params, const Vec& x,
                                  bool want_second);

BatchDerivs eval_batch(const MlpParameters& params, const Mat& X, DerivOrder order);

}  // namespace cpinn
