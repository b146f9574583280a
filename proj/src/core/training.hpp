#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/datagen.hpp"
#include "core/linalg.hpp"
#include "core/network.hpp"
#include "core/problems.hpp"

namespace cpinn {

struct LrDecay {
  double factor = 0.5;
  int every = 0;  // 0: derived as max(1, epochs / 3)
};

struct TrainConfig {
  double lambda_data = 1.0;
  double lambda_pde = 1.0;
  double lambda_ic = 0.0;
  double lambda_bc = 0.0;
  int epochs = 1000;
  double lr = 1e-3;
  LrDecay decay;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double data = 0.0;
  double pde = 0.0;
  double ic = 0.0;
  double bc = 0.0;
};

struct TrainReport {
  std::vector<LossTerms> trace;  // loss at the start of each epoch
  double wall_seconds = 0.0;
};

struct LossContext {
  const PdeProblem* problem = nullptr;
  const LabeledSet* data = nullptr;
  const CollocationSet* colloc = nullptr;
};

LossTerms composite_loss(const MlpParameters& params, const LossContext& ctx,
                         const TrainConfig& cfg);
// Also accumulates the gradient (canonical flat layout) into `grad`, which
// must be zero-initialized to the parameter count.
LossTerms composite_loss_grad(const MlpParameters& params, const LossContext& ctx,
                              const TrainConfig& cfg, Vec& grad);

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(Eigen::Index n);
  void step(Vec& params, const Vec& grad, double lr);

 private:
  Vec m_, v_;
  long t_ = 0;
};

std::pair<MlpParameters, TrainReport> train_adam(MlpParameters init,
                                                 const LossContext& ctx,
                                                 const TrainConfig& cfg);

// Window-averaged trace check: non-increasing from the 10% mark to the end.
bool smoothed_nonincreasing(const std::vector<double>& values, int window,
                            double rel_slack = 0.0);

}  // namespace cpinn
