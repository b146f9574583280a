#include "core/training.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "core/diff_engine.hpp"
#include "core/errors.hpp"
#include "core/threading.hpp"

namespace cpinn {

namespace {

constexpr std::size_t kBlock = 256;

void check_finite_term(double value, const char* term) {
  if (!std::isfinite(value)) {
    fail(ErrorCode::numeric_error,
         std::string("the ") + term + " loss term became non-finite");
  }
}

// Per-block partial results reduced in block order for determinism.
struct BlockSums {
  std::vector<double> loss;
  std::vector<Vec> grad;
};

// Mean squared error of the network value against targets; optional grad.
double value_mse_term(const MlpParameters& params, const Mat& X, const Vec& targets,
                      double weight, Vec* grad_accum) {
  const std::size_t n = static_cast<std::size_t>(X.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  BlockSums sums;
  sums.loss.assign(n_blocks, 0.0);
  if (grad_accum) sums.grad.assign(n_blocks, Vec());

  parallel_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    const Eigen::Index cols = static_cast<Eigen::Index>(end - begin);
    MlpDerivEngine engine(params);
    engine.forward(X.middleCols(static_cast<Eigen::Index>(begin), cols), DerivOrder::value);
    const RowVec err =
        engine.value() - targets.segment(static_cast<Eigen::Index>(begin), cols).transpose();
    sums.loss[b] = err.squaredNorm();
    if (grad_accum) {
      Vec g = Vec::Zero(grad_accum->size());
      const RowVec seed = (2.0 * weight * inv_n) * err;
      engine.backward(seed, nullptr, nullptr, g);
      sums.grad[b] = std::move(g);
    }
  });

  double loss = 0.0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    loss += sums.loss[b];
    if (grad_accum) *grad_accum += sums.grad[b];
  }
  return loss * inv_n;
}

// PDE residual mean square over the interior collocation points.
double residual_term(const MlpParameters& params, const PdeProblem& problem,
                     const Mat& X, double weight, Vec* grad_accum) {
  const std::size_t n = static_cast<std::size_t>(X.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  BlockSums sums;
  sums.loss.assign(n_blocks, 0.0);
  if (grad_accum) sums.grad.assign(n_blocks, Vec());

  const double k2 = problem.wavenumber * problem.wavenumber;
  const double om2 = problem.omega * problem.omega;
  const double damp = 2.0 * problem.zeta * problem.omega;

  parallel_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    const Eigen::Index cols = static_cast<Eigen::Index>(end - begin);
    const Mat Xb = X.middleCols(static_cast<Eigen::Index>(begin), cols);
    MlpDerivEngine engine(params);
    engine.forward(Xb, DerivOrder::second);
    const RowVec& u = engine.value();
    const Mat& g = engine.input_grad();
    const Mat& h = engine.input_hess_diag();

    RowVec r(cols);
    RowVec du(cols);                        // dF/du per point
    double dg_coeff = 0.0;                  // dF/d(grad_0), oscillator only
    Vec dh_coeff = Vec::Ones(problem.dim);  // dF/d(hess_i), constant per problem
    switch (problem.name) {
      case ProblemName::poisson_1d:
        r = h.row(0);
        du.setZero();
        break;
      case ProblemName::oscillator_1d:
        r = h.row(0) + damp * g.row(0) + om2 * u;
        du.setConstant(om2);
        dg_coeff = damp;
        break;
      case ProblemName::allen_cahn_2d:
        r = problem.lambda * (h.row(0) + h.row(1)).array() +
            u.array() * (u.array().square() - 1.0);
        du = (3.0 * u.array().square() - 1.0).matrix();
        dh_coeff.setConstant(problem.lambda);
        break;
      case ProblemName::helmholtz_3d:
        r = h.colwise().sum() + k2 * u;
        du.setConstant(k2);
        break;
    }
    for (Eigen::Index j = 0; j < cols; ++j) r[j] -= forcing(problem, Xb.col(j));

    sums.loss[b] = r.squaredNorm();
    if (grad_accum) {
      const RowVec scale = (2.0 * weight * inv_n) * r;
      const RowVec value_bar = scale.cwiseProduct(du);
      Mat grad_bar = Mat::Zero(problem.dim, cols);
      if (dg_coeff != 0.0) grad_bar.row(0) = dg_coeff * scale;
      Mat hess_bar(problem.dim, cols);
      for (int i = 0; i < problem.dim; ++i) hess_bar.row(i) = dh_coeff[i] * scale;
      Vec gflat = Vec::Zero(grad_accum->size());
      engine.backward(value_bar, &grad_bar, &hess_bar, gflat);
      sums.grad[b] = std::move(gflat);
    }
  });

  double loss = 0.0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    loss += sums.loss[b];
    if (grad_accum) *grad_accum += sums.grad[b];
  }
  return loss * inv_n;
}

// Initial-condition term (oscillator): value and velocity penalties at t=0.
double initial_term(const MlpParameters& params, const PdeProblem& problem,
                    const Mat& X, double weight, Vec* grad_accum) {
  const Eigen::Index n = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  MlpDerivEngine engine(params);
  engine.forward(X, DerivOrder::first);
  const RowVec value_err = engine.value().array() - problem.u0;
  const RowVec vel_err = engine.input_grad().row(0).array() - problem.v0;
  const double loss = (value_err.squaredNorm() + vel_err.squaredNorm()) * inv_n;
  if (grad_accum) {
    const RowVec value_bar = (2.0 * weight * inv_n) * value_err;
    const Mat grad_bar = (2.0 * weight * inv_n) * vel_err;
    engine.backward(value_bar, &grad_bar, nullptr, *grad_accum);
  }
  return loss;
}

}  // namespace

void TrainConfig::validate() const {
  require(lambda_data >= 0.0 && lambda_pde >= 0.0 && lambda_ic >= 0.0 && lambda_bc >= 0.0,
          ErrorCode::invalid_argument, "loss weights must be non-negative");
  require(epochs >= 1, ErrorCode::invalid_argument, "epochs must be >= 1");
  require(lr > 0.0, ErrorCode::invalid_argument, "learning rate must be positive");
  require(decay.factor > 0.0, ErrorCode::invalid_argument,
          "learning-rate decay factor must be positive");
}

static LossTerms composite_impl(const MlpParameters& params, const LossContext& ctx,
                                const TrainConfig& cfg, Vec* grad) {
  require(ctx.problem != nullptr, ErrorCode::invalid_argument, "loss context needs a problem");
  LossTerms terms;

  if (cfg.lambda_data > 0.0) {
    require(ctx.data != nullptr && ctx.data->size() > 0, ErrorCode::invalid_argument,
            "data term has nonzero weight but no observations");
    terms.data = value_mse_term(params, ctx.data->X, ctx.data->u, cfg.lambda_data, grad);
    check_finite_term(terms.data, "data");
  }
  if (cfg.lambda_pde > 0.0) {
    require(ctx.colloc != nullptr && ctx.colloc->interior.cols() > 0,
            ErrorCode::invalid_argument,
            "pde term has nonzero weight but no collocation points");
    terms.pde = residual_term(params, *ctx.problem, ctx.colloc->interior, cfg.lambda_pde, grad);
    check_finite_term(terms.pde, "pde");
  }
  if (cfg.lambda_ic > 0.0) {
    require(ctx.colloc != nullptr && ctx.colloc->initial.cols() > 0,
            ErrorCode::invalid_argument,
            "ic term has nonzero weight but no initial points");
    terms.ic = initial_term(params, *ctx.problem, ctx.colloc->initial, cfg.lambda_ic, grad);
    check_finite_term(terms.ic, "ic");
  }
  if (cfg.lambda_bc > 0.0) {
    require(ctx.colloc != nullptr && ctx.colloc->boundary.cols() > 0,
            ErrorCode::invalid_argument,
            "bc term has nonzero weight but no boundary points");
    const Eigen::Index nb = ctx.colloc->boundary.cols();
    Vec targets(nb);
    for (Eigen::Index j = 0; j < nb; ++j) {
      targets[j] = boundary_value(*ctx.problem, ctx.colloc->boundary.col(j));
    }
    terms.bc = value_mse_term(params, ctx.colloc->boundary, targets, cfg.lambda_bc, grad);
    check_finite_term(terms.bc, "bc");
  }

  terms.total = cfg.lambda_data * terms.data + cfg.lambda_pde * terms.pde +
                cfg.lambda_ic * terms.ic + cfg.lambda_bc * terms.bc;
  return terms;
}

LossTerms composite_loss(const MlpParameters& params, const LossContext& ctx,
                         const TrainConfig& cfg) {
  return composite_impl(params, ctx, cfg, nullptr);
}

LossTerms composite_loss_grad(const MlpParameters& params, const LossContext& ctx,
                              const TrainConfig& cfg, Vec& grad) {
  require(static_cast<std::size_t>(grad.size()) == params.parameter_count(),
          ErrorCode::dimension_mismatch, "gradient buffer has the wrong length");
  return composite_impl(params, ctx, cfg, &grad);
}

AdamOptimizer::AdamOptimizer(Eigen::Index n) : m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

void AdamOptimizer::step(Vec& params, const Vec& grad, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  m_ = beta1 * m_ + (1.0 - beta1) * grad;
  v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  params.array() -=
      lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
}

std::pair<MlpParameters, TrainReport> train_adam(MlpParameters init,
                                                 const LossContext& ctx,
                                                 const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const int decay_every = cfg.decay.every > 0 ? cfg.decay.every : std::max(1, cfg.epochs / 3);

  Vec flat = init.flatten();
  AdamOptimizer adam(flat.size());
  TrainReport report;
  report.trace.reserve(static_cast<std::size_t>(cfg.epochs));
  Vec grad(flat.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    init.set_from_flat(flat);
    grad.setZero();
    LossTerms terms;
    try {
      terms = composite_loss_grad(init, ctx, cfg, grad);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::numeric_error) {
        fail(ErrorCode::divergence,
             "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      throw;
    }
    if (!std::isfinite(terms.total)) {
      fail(ErrorCode::divergence, "training diverged at epoch " + std::to_string(epoch));
    }
    report.trace.push_back(terms);
    const double lr = cfg.lr * std::pow(cfg.decay.factor, epoch / decay_every);
    adam.step(flat, grad, lr);
  }
  init.set_from_flat(flat);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(init), std::move(report)};
}

bool smoothed_nonincreasing(const std::vector<double>& values, int window,
                            double rel_slack) {
  if (values.size() < 3) return true;
  const int n = static_cast<int>(values.size());
  window = std::max(1, std::min(window, n));
  std::vector<double> smooth(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += values[static_cast<std::size_t>(i)];
    if (i >= window) acc -= values[static_cast<std::size_t>(i - window)];
    smooth[static_cast<std::size_t>(i)] = acc / std::min(i + 1, window);
  }
  const int from = n / 10;
  for (int i = from + 1; i < n; ++i) {
    const double prev = smooth[static_cast<std::size_t>(i - 1)];
    if (smooth[static_cast<std::size_t>(i)] > prev + rel_slack * std::abs(prev)) return false;
  }
  return true;
}

}  // namespace cpinn
