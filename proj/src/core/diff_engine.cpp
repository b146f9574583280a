#include "core/diff_engine.hpp"

#include <string>

#include "core/errors.hpp"

namespace cpinn {

namespace {

void check_finite_layer(const Mat& m, int layer) {
  if (!m.allFinite()) {
    fail(ErrorCode::numeric_error,
         "non-finite values while propagating derivatives at layer " + std::to_string(layer));
  }
}

}  // namespace

MlpDerivEngine::MlpDerivEngine(const MlpParameters& params) : params_(&params) {
  const int L = params.n_weight_layers();
  acts_.resize(static_cast<std::size_t>(L));
  gz_.resize(static_cast<std::size_t>(L));
  hz_.resize(static_cast<std::size_t>(L));
}

void MlpDerivEngine::forward(const Mat& X, DerivOrder order) {
  const MlpParameters& p = *params_;
  require(X.rows() == p.input_dim(), ErrorCode::dimension_mismatch,
          "batch input has dimension " + std::to_string(X.rows()) + ", network expects " +
              std::to_string(p.input_dim()));
  require(p.output_dim() == 1, ErrorCode::invalid_argument,
          "derivative engine expects a scalar-output network");
  order_ = order;
  n_ = X.cols();
  const int L = p.n_weight_layers();
  const int d = p.input_dim();
  const bool first = order != DerivOrder::value;
  const bool second = order == DerivOrder::second;

  acts_[0] = X;
  Mat z;
  for (int l = 0; l < L; ++l) {
    const Mat& W = p.weights[static_cast<std::size_t>(l)];
    const Mat& a_in = acts_[static_cast<std::size_t>(l)];
    z.noalias() = W * a_in;
    z.colwise() += p.biases[static_cast<std::size_t>(l)];
    check_finite_layer(z, l);

    if (first) {
      auto& gz_l = gz_[static_cast<std::size_t>(l)];
      auto& hz_l = hz_[static_cast<std::size_t>(l)];
      gz_l.resize(static_cast<std::size_t>(d));
      if (second) hz_l.resize(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        if (l == 0) {
          // input first-derivative stream is the constant e_i
          gz_l[static_cast<std::size_t>(i)] = W.col(i).replicate(1, n_);
          if (second) hz_l[static_cast<std::size_t>(i)].setZero(W.rows(), n_);
        } else {
          const Mat& t = acts_[static_cast<std::size_t>(l)];  // tanh outputs of layer l-1
          const auto tp = (1.0 - t.array().square());
          const Mat& gz_prev = gz_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
          gz_l[static_cast<std::size_t>(i)].noalias() = W * (tp * gz_prev.array()).matrix();
          if (second) {
            const Mat& hz_prev = hz_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
            const auto tpp = -2.0 * t.array() * tp;
            hz_l[static_cast<std::size_t>(i)].noalias() =
                W * (tpp * gz_prev.array().square() + tp * hz_prev.array()).matrix();
          }
        }
      }
    }

    if (l + 1 < L) {
      acts_[static_cast<std::size_t>(l + 1)] = z.array().tanh();
    } else {
      value_ = z.row(0);
      if (first) {
        out_grad_.resize(d, n_);
        for (int i = 0; i < d; ++i) {
          out_grad_.row(i) = gz_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)].row(0);
        }
      }
      if (second) {
        out_hess_.resize(d, n_);
        for (int i = 0; i < d; ++i) {
          out_hess_.row(i) = hz_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)].row(0);
        }
      }
    }
  }
}

void MlpDerivEngine::backward(const RowVec& value_bar, const Mat* grad_bar,
                              const Mat* hess_bar, Vec& flat_grad) {
  const MlpParameters& p = *params_;
  const int L = p.n_weight_layers();
  const int d = p.input_dim();
  const bool first = order_ != DerivOrder::value && grad_bar != nullptr;
  const bool second = order_ == DerivOrder::second && hess_bar != nullptr;
  require(value_bar.size() == n_, ErrorCode::dimension_mismatch,
          "value adjoint length mismatch in backward pass");
  require(static_cast<std::size_t>(flat_grad.size()) == p.parameter_count(),
          ErrorCode::dimension_mismatch, "flat gradient buffer has the wrong length");

  // Adjoints of the current layer's pre-activations.
  Mat zb = value_bar;
  std::vector<Mat> gzb(static_cast<std::size_t>(d)), hzb(static_cast<std::size_t>(d));
  if (first) {
    for (int i = 0; i < d; ++i) gzb[static_cast<std::size_t>(i)] = grad_bar->row(i);
  }
  if (second) {
    for (int i = 0; i < d; ++i) hzb[static_cast<std::size_t>(i)] = hess_bar->row(i);
  }

  // Offsets of each layer's W block in the canonical flat layout.
  std::vector<std::size_t> offsets(static_cast<std::size_t>(L));
  {
    std::size_t k = 0;
    for (int l = 0; l < L; ++l) {
      offsets[static_cast<std::size_t>(l)] = k;
      k += static_cast<std::size_t>(p.layer_dims[static_cast<std::size_t>(l)]) *
               p.layer_dims[static_cast<std::size_t>(l) + 1] +
           static_cast<std::size_t>(p.layer_dims[static_cast<std::size_t>(l) + 1]);
    }
  }

  Mat wb;
  for (int l = L - 1; l >= 0; --l) {
    const Mat& W = p.weights[static_cast<std::size_t>(l)];
    const Mat& a_in = acts_[static_cast<std::size_t>(l)];
    const int rows = static_cast<int>(W.rows());
    const int cols = static_cast<int>(W.cols());

    wb.setZero(rows, cols);
    wb.noalias() += zb * a_in.transpose();
    if (first) {
      if (l == 0) {
        for (int i = 0; i < d; ++i) {
          wb.col(i) += gzb[static_cast<std::size_t>(i)].rowwise().sum();
          // second-derivative input stream is zero at the input layer
        }
      } else {
        const Mat& t = a_in;
        const auto tp = (1.0 - t.array().square());
        for (int i = 0; i < d; ++i) {
          const Mat& gz_prev = gz_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
          wb.noalias() += gzb[static_cast<std::size_t>(i)] * (tp * gz_prev.array()).matrix().transpose();
          if (second) {
            const Mat& hz_prev = hz_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
            const auto tpp = -2.0 * t.array() * tp;
            wb.noalias() += hzb[static_cast<std::size_t>(i)] *
                            (tpp * gz_prev.array().square() + tp * hz_prev.array())
                                .matrix()
                                .transpose();
          }
        }
      }
    }

    // Scatter into the flat buffer (W row-major, then b).
    {
      const std::size_t base = offsets[static_cast<std::size_t>(l)];
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          flat_grad[static_cast<Eigen::Index>(base + static_cast<std::size_t>(r) * cols + c)] +=
              wb(r, c);
        }
      }
      const std::size_t bbase = base + static_cast<std::size_t>(rows) * cols;
      const Vec bias_grad = zb.rowwise().sum();
      for (int r = 0; r < rows; ++r) {
        flat_grad[static_cast<Eigen::Index>(bbase + static_cast<std::size_t>(r))] += bias_grad[r];
      }
    }

    if (l == 0) break;

    // Pull adjoints through W, then through the tanh of the previous layer.
    Mat ab = W.transpose() * zb;
    const Mat& t = a_in;  // tanh outputs of layer l-1
    const auto tp = (1.0 - t.array().square());
    Mat zb_prev = (tp * ab.array()).matrix();
    if (first) {
      const auto tpp = -2.0 * t.array() * tp;
      for (int i = 0; i < d; ++i) {
        const Mat& gz_prev = gz_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
        Mat gab = W.transpose() * gzb[static_cast<std::size_t>(i)];
        zb_prev.array() += tpp * gz_prev.array() * gab.array();
        Mat gzb_prev = (tp * gab.array()).matrix();
        if (second) {
          const Mat& hz_prev = hz_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
          const auto tppp = -2.0 * tp * (1.0 - 3.0 * t.array().square());
          Mat hab = W.transpose() * hzb[static_cast<std::size_t>(i)];
          zb_prev.array() +=
              (tppp * gz_prev.array().square() + tpp * hz_prev.array()) * hab.array();
          gzb_prev.array() += 2.0 * tpp * gz_prev.array() * hab.array();
          hzb[static_cast<std::size_t>(i)] = (tp * hab.array()).matrix();
        }
        gzb[static_cast<std::size_t>(i)] = std::move(gzb_prev);
      }
    }
    zb = std::move(zb_prev);
  }
}

DualTriple eval_with_input_derivs(const MlpParameters& params, const Vec& x,
                                  bool want_second) {
  require(x.size() == params.input_dim(), ErrorCode::dimension_mismatch,
          "point has dimension " + std::to_string(x.size()) + ", network expects " +
              std::to_string(params.input_dim()));
  MlpDerivEngine engine(params);
  engine.forward(x, want_second ? DerivOrder::second : DerivOrder::first);
  DualTriple t;
  t.value = engine.value()[0];
  t.grad = engine.input_grad().col(0);
  if (want_second) {
    t.hess_diag = engine.input_hess_diag().col(0);
  } else {
    t.hess_diag = Vec::Zero(x.size());
  }
  return t;
}

BatchDerivs eval_batch(const MlpParameters& params, const Mat& X, DerivOrder order) {
  MlpDerivEngine engine(params);
  engine.forward(X, order);
  BatchDerivs out;
  out.value = engine.value();
  if (order != DerivOrder::value) out.grad = engine.input_grad();
  if (order == DerivOrder::second) out.hess_diag = engine.input_hess_diag();
  return out;
}

}  // namespace cpinn
