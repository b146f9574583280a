#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/datagen.hpp"
#include "core/linalg.hpp"
#include "core/network.hpp"
#include "core/problems.hpp"
#include "core/training.hpp"
#include "core/uq_baselines.hpp"

namespace cpinn {

// Mean-field Gaussian posterior over the flat parameter vector;
// sigma_j = softplus(rho_j).
struct VariationalParams {
  std::vector<int> layer_dims;
  Vec mu;
  Vec rho;
  double prior_std = 1.0;
  std::uint64_t seed = 0;

  Vec sigma() const;  // softplus(rho)
};

struct PosteriorSamples {
  std::vector<Vec> samples;  // flat parameter vectors
  double acceptance_rate = 1.0;
  std::string method;
  bool low_acceptance_warning = false;
};

// Closed-form KL( N(mu, softplus(rho)^2) || N(0, prior_std^2) ), summed over
// dimensions.
double kl_mean_field(const Vec& mu, const Vec& rho, double prior_std);

// Gaussian data likelihood around the network prediction with the physics
// terms folded in at the configured loss weights:
//   -log p(D|theta) = N_d / (2 sigma_lik^2) * sum_t lambda_t * L_t(theta) + const.
// With lambda_data = 1 the data part is exactly the Gaussian log-likelihood.
class LikelihoodContext {
 public:
  LikelihoodContext(const PdeProblem& problem, const LabeledSet& data,
                    const CollocationSet& colloc, const TrainConfig& weights,
                    double sigma_lik);

  double neg_log_lik(const MlpParameters& theta) const;
  double neg_log_lik_grad(const MlpParameters& theta, Vec& grad) const;
  double neg_log_lik_flat(const Vec& theta_flat) const;
  double neg_log_lik_grad_flat(const Vec& theta_flat, Vec& grad) const;

  const std::vector<int>& layer_dims() const { return dims_; }
  void set_layer_dims(std::vector<int> dims);
  double scale() const { return scale_; }

 private:
  const PdeProblem* problem_;
  const LabeledSet* data_;
  const CollocationSet* colloc_;
  TrainConfig weights_;
  double scale_;  // N_d / (2 sigma_lik^2)
  std::vector<int> dims_;
};

struct ElboBreakdown {
  double total = 0.0;
  double nll = 0.0;  // Monte Carlo estimate of -E_q[log p(D|theta)]
  double kl = 0.0;
};

// Generic likelihood hooks: value, and value with gradient accumulation.
struct LogLikFns {
  std::function<double(const Vec&)> neg_log_lik;
  std::function<double(const Vec&, Vec&)> neg_log_lik_grad;
};

LogLikFns pinn_likelihood(const LikelihoodContext& ctx);

ElboBreakdown negative_elbo(const VariationalParams& vp, const LogLikFns& lik,
                            int n_samples, std::uint64_t seed);
ElboBreakdown negative_elbo_grad(const VariationalParams& vp, const LogLikFns& lik,
                                 int n_samples, std::uint64_t seed, Vec& grad_mu,
                                 Vec& grad_rho);
ElboBreakdown negative_elbo(const VariationalParams& vp, const LikelihoodContext& ctx,
                            int n_samples, std::uint64_t seed);

struct ViTrainConfig {
  int epochs = 5000;
  double lr = 1e-3;
  int mc_samples = 1;
  double prior_std = 1.0;
  double rho_init_sigma = 0.05;  // initial posterior scale, through softplus^-1
  std::uint64_t seed = 0;
};

struct ViTrainReport {
  std::vector<double> elbo_trace;  // negative ELBO per epoch
  double wall_seconds = 0.0;
};

// Core optimizer over arbitrary (mu, rho) starting points.
std::pair<VariationalParams, ViTrainReport> train_vi(VariationalParams init,
                                                     const LogLikFns& lik,
                                                     const ViTrainConfig& cfg);
// Network posterior: Xavier-initialized mean, PINN likelihood.
std::pair<VariationalParams, ViTrainReport> train_vi(const std::vector<int>& layer_dims,
                                                     const LikelihoodContext& ctx,
                                                     const ViTrainConfig& cfg);

// Half-kick / drift / half-kick leapfrog with identity mass matrix.
using GradFn = std::function<void(const Vec&, Vec&)>;
void leapfrog(Vec& theta, Vec& momentum, double step_size, int n_steps,
              const GradFn& grad_U);

struct HmcConfig {
  double step_size = 1e-3;
  int n_leapfrog = 50;
  int n_samples = 200;  // retained draws
  int n_burnin = 1000;
  int thin = 5;
  std::uint64_t seed = 0;
};

using PotentialFn = std::function<double(const Vec&)>;
PosteriorSamples hmc_sample(const Vec& init, const PotentialFn& U, const GradFn& grad_U,
                            const HmcConfig& cfg);

struct MomentPrediction {
  double mean = 0.0;
  double sigma = 0.0;
};

// Predictive moments over M forward passes: fresh draws from q for VI,
// the stored chain for HMC. Population variance, floored sigma.
MomentPrediction posterior_predict(const VariationalParams& vp, const Vec& x, int m,
                                   std::uint64_t seed);
MomentPrediction posterior_predict(const PosteriorSamples& samples,
                                   const std::vector<int>& layer_dims, const Vec& x);

UncertaintyModel make_vi_model(const VariationalParams& vp, int m, std::uint64_t seed,
                               std::string provenance = {});
UncertaintyModel make_hmc_model(const PosteriorSamples& samples,
                                const std::vector<int>& layer_dims,
                                std::string provenance = {});

nlohmann::ordered_json vi_params_to_json(const VariationalParams& vp);
VariationalParams vi_params_from_json(const nlohmann::json& j);
nlohmann::ordered_json posterior_samples_to_json(const PosteriorSamples& samples);
PosteriorSamples posterior_samples_from_json(const nlohmann::json& j);

}  // namespace cpinn
