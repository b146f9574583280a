#include "core/bayesian.hpp"

#include <chrono>
#include <cmath>
#include <memory>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace cpinn {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

MlpParameters shape_like(const std::vector<int>& dims) {
  MlpParameters p;
  p.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.weights.push_back(Mat::Zero(dims[l + 1], dims[l]));
    p.biases.push_back(Vec::Zero(dims[l + 1]));
  }
  return p;
}

}  // namespace

Vec VariationalParams::sigma() const {
  Vec s(rho.size());
  for (Eigen::Index i = 0; i < rho.size(); ++i) s[i] = softplus(rho[i]);
  return s;
}

double kl_mean_field(const Vec& mu, const Vec& rho, double prior_std) {
  require(prior_std > 0.0, ErrorCode::invalid_argument,
          "prior standard deviation must be positive");
  require(mu.size() == rho.size(), ErrorCode::dimension_mismatch,
          "mu and rho must have equal lengths");
  const double s0_sq = prior_std * prior_std;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double s = softplus(rho[i]);
    kl += std::log(prior_std / s) + (s * s + mu[i] * mu[i]) / (2.0 * s0_sq) - 0.5;
  }
  return kl;
}

LikelihoodContext::LikelihoodContext(const PdeProblem& problem, const LabeledSet& data,
                                     const CollocationSet& colloc,
                                     const TrainConfig& weights, double sigma_lik)
    : problem_(&problem), data_(&data), colloc_(&colloc), weights_(weights) {
  require(sigma_lik > 0.0, ErrorCode::invalid_argument,
          "likelihood standard deviation must be positive");
  scale_ = static_cast<double>(data.size()) / (2.0 * sigma_lik * sigma_lik);
}

void LikelihoodContext::set_layer_dims(std::vector<int> dims) { dims_ = std::move(dims); }

double LikelihoodContext::neg_log_lik(const MlpParameters& theta) const {
  LossContext ctx{problem_, data_, colloc_};
  return scale_ * composite_loss(theta, ctx, weights_).total;
}

double LikelihoodContext::neg_log_lik_grad(const MlpParameters& theta, Vec& grad) const {
  LossContext ctx{problem_, data_, colloc_};
  Vec g = Vec::Zero(grad.size());
  const LossTerms terms = composite_loss_grad(theta, ctx, weights_, g);
  grad += scale_ * g;
  return scale_ * terms.total;
}

double LikelihoodContext::neg_log_lik_flat(const Vec& theta_flat) const {
  MlpParameters theta = shape_like(dims_);
  theta.set_from_flat(theta_flat);
  return neg_log_lik(theta);
}

double LikelihoodContext::neg_log_lik_grad_flat(const Vec& theta_flat, Vec& grad) const {
  MlpParameters theta = shape_like(dims_);
  theta.set_from_flat(theta_flat);
  return neg_log_lik_grad(theta, grad);
}

LogLikFns pinn_likelihood(const LikelihoodContext& ctx) {
  LogLikFns fns;
  fns.neg_log_lik = [ctx](const Vec& theta) { return ctx.neg_log_lik_flat(theta); };
  fns.neg_log_lik_grad = [ctx](const Vec& theta, Vec& grad) {
    return ctx.neg_log_lik_grad_flat(theta, grad);
  };
  return fns;
}

ElboBreakdown negative_elbo(const VariationalParams& vp, const LogLikFns& lik,
                            int n_samples, std::uint64_t seed) {
  require(n_samples >= 1, ErrorCode::invalid_argument, "n_samples must be >= 1");
  ElboBreakdown out;
  out.kl = kl_mean_field(vp.mu, vp.rho, vp.prior_std);
  const Vec sig = vp.sigma();
  Rng rng(seed);
  for (int s = 0; s < n_samples; ++s) {
    Vec theta(vp.mu.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      theta[i] = vp.mu[i] + sig[i] * rng.normal();
    }
    out.nll += lik.neg_log_lik(theta);
  }
  out.nll /= n_samples;
  out.total = out.nll + out.kl;
  if (!std::isfinite(out.total)) {
    fail(ErrorCode::numeric_error, "negative ELBO became non-finite");
  }
  return out;
}

ElboBreakdown negative_elbo(const VariationalParams& vp, const LikelihoodContext& ctx,
                            int n_samples, std::uint64_t seed) {
  LikelihoodContext local = ctx;
  local.set_layer_dims(vp.layer_dims);
  return negative_elbo(vp, pinn_likelihood(local), n_samples, seed);
}

ElboBreakdown negative_elbo_grad(const VariationalParams& vp, const LogLikFns& lik,
                                 int n_samples, std::uint64_t seed, Vec& grad_mu,
                                 Vec& grad_rho) {
  require(n_samples >= 1, ErrorCode::invalid_argument, "n_samples must be >= 1");
  const Eigen::Index n = vp.mu.size();
  grad_mu.setZero(n);
  grad_rho.setZero(n);
  ElboBreakdown out;
  out.kl = kl_mean_field(vp.mu, vp.rho, vp.prior_std);
  const Vec sig = vp.sigma();
  Rng rng(seed);
  Vec theta(n), gtheta(n);
  for (int s = 0; s < n_samples; ++s) {
    Vec eps(n);
    for (Eigen::Index i = 0; i < n; ++i) eps[i] = rng.normal();
    theta = vp.mu + sig.cwiseProduct(eps);
    gtheta.setZero();
    out.nll += lik.neg_log_lik_grad(theta, gtheta);
    grad_mu += gtheta;
    for (Eigen::Index i = 0; i < n; ++i) {
      grad_rho[i] += gtheta[i] * eps[i] * sigmoid(vp.rho[i]);
    }
  }
  const double inv = 1.0 / n_samples;
  out.nll *= inv;
  grad_mu *= inv;
  grad_rho *= inv;

  // KL gradients
  const double s0_sq = vp.prior_std * vp.prior_std;
  for (Eigen::Index i = 0; i < n; ++i) {
    grad_mu[i] += vp.mu[i] / s0_sq;
    grad_rho[i] += (-1.0 / sig[i] + sig[i] / s0_sq) * sigmoid(vp.rho[i]);
  }
  out.total = out.nll + out.kl;
  if (!std::isfinite(out.total)) {
    fail(ErrorCode::numeric_error, "negative ELBO became non-finite");
  }
  return out;
}

std::pair<VariationalParams, ViTrainReport> train_vi(VariationalParams init,
                                                     const LogLikFns& lik,
                                                     const ViTrainConfig& cfg) {
  require(cfg.epochs >= 1, ErrorCode::invalid_argument, "vi epochs must be >= 1");
  require(cfg.lr > 0.0, ErrorCode::invalid_argument, "vi learning rate must be positive");
  const auto start = std::chrono::steady_clock::now();

  VariationalParams vp = std::move(init);
  const Eigen::Index n = vp.mu.size();
  Vec packed(2 * n);
  packed.head(n) = vp.mu;
  packed.tail(n) = vp.rho;
  AdamOptimizer adam(packed.size());
  ViTrainReport report;
  report.elbo_trace.reserve(static_cast<std::size_t>(cfg.epochs));

  Vec gmu, grho;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    vp.mu = packed.head(n);
    vp.rho = packed.tail(n);
    ElboBreakdown elbo;
    try {
      elbo = negative_elbo_grad(vp, lik, cfg.mc_samples,
                                derive_seed(cfg.seed, "vi-step", static_cast<std::uint64_t>(epoch)),
                                gmu, grho);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::numeric_error) {
        fail(ErrorCode::divergence,
             "vi training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      throw;
    }
    report.elbo_trace.push_back(elbo.total);
    Vec g(packed.size());
    g.head(n) = gmu;
    g.tail(n) = grho;
    adam.step(packed, g, cfg.lr);
  }
  vp.mu = packed.head(n);
  vp.rho = packed.tail(n);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(vp), std::move(report)};
}

std::pair<VariationalParams, ViTrainReport> train_vi(const std::vector<int>& layer_dims,
                                                     const LikelihoodContext& ctx,
                                                     const ViTrainConfig& cfg) {
  VariationalParams vp;
  vp.layer_dims = layer_dims;
  vp.prior_std = cfg.prior_std;
  vp.seed = cfg.seed;
  vp.mu = init_xavier(layer_dims, derive_seed(cfg.seed, "vi-mu")).flatten();
  vp.rho = Vec::Constant(vp.mu.size(), softplus_inverse(cfg.rho_init_sigma));

  LikelihoodContext local_ctx = ctx;
  local_ctx.set_layer_dims(layer_dims);
  return train_vi(std::move(vp), pinn_likelihood(local_ctx), cfg);
}

void leapfrog(Vec& theta, Vec& momentum, double step_size, int n_steps,
              const GradFn& grad_U) {
  require(step_size > 0.0, ErrorCode::invalid_argument, "leapfrog step size must be positive");
  require(n_steps >= 1, ErrorCode::invalid_argument, "leapfrog needs at least one step");
  Vec grad = Vec::Zero(theta.size());
  grad_U(theta, grad);
  momentum -= 0.5 * step_size * grad;
  for (int l = 0; l < n_steps; ++l) {
    theta += step_size * momentum;
    if (l + 1 < n_steps) {
      grad.setZero();
      grad_U(theta, grad);
      momentum -= step_size * grad;
    }
  }
  grad.setZero();
  grad_U(theta, grad);
  momentum -= 0.5 * step_size * grad;
  if (!theta.allFinite() || !momentum.allFinite()) {
    fail(ErrorCode::numeric_error, "leapfrog produced a non-finite state");
  }
}

PosteriorSamples hmc_sample(const Vec& init, const PotentialFn& U, const GradFn& grad_U,
                            const HmcConfig& cfg) {
  require(cfg.step_size > 0.0 && cfg.n_leapfrog >= 1 && cfg.n_samples >= 2 &&
              cfg.n_burnin >= 0 && cfg.thin >= 1,
          ErrorCode::invalid_argument, "invalid HMC sampler configuration");
  PosteriorSamples out;
  out.method = "hmc";
  out.samples.reserve(static_cast<std::size_t>(cfg.n_samples));

  Rng rng(derive_seed(cfg.seed, "hmc"));
  Vec theta = init;
  double u_current = U(theta);
  long accepted = 0, proposed = 0;
  long post_burnin_iters = 0;

  while (static_cast<int>(out.samples.size()) < cfg.n_samples) {
    Vec r(theta.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = rng.normal();
    const double h_old = u_current + 0.5 * r.squaredNorm();

    Vec theta_new = theta;
    Vec r_new = r;
    bool finite_path = true;
    double h_new = 0.0;
    try {
      leapfrog(theta_new, r_new, cfg.step_size, cfg.n_leapfrog, grad_U);
      const double u_new = U(theta_new);
      h_new = u_new + 0.5 * r_new.squaredNorm();
      finite_path = std::isfinite(h_new);
      if (finite_path && std::log(std::max(rng.uniform(), 1e-300)) < h_old - h_new) {
        theta = theta_new;
        u_current = u_new;
        ++accepted;
      }
    } catch (const Error&) {
      finite_path = false;  // reject the proposal, keep the chain alive
    }
    ++proposed;

    if (proposed > cfg.n_burnin) {
      ++post_burnin_iters;
      if (post_burnin_iters % cfg.thin == 0) out.samples.push_back(theta);
    }
  }

  out.acceptance_rate = proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0;
  out.low_acceptance_warning = out.acceptance_rate < 0.01;
  return out;
}

MomentPrediction posterior_predict(const VariationalParams& vp, const Vec& x, int m,
                                   std::uint64_t seed) {
  require(m >= 2, ErrorCode::invalid_argument, "posterior prediction needs m >= 2");
  MlpParameters theta = shape_like(vp.layer_dims);
  const Vec sig = vp.sigma();
  Rng rng(derive_seed(seed, "vi-predict"));
  double sum = 0.0, sum_sq = 0.0;
  Vec flat(vp.mu.size());
  for (int s = 0; s < m; ++s) {
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = vp.mu[i] + sig[i] * rng.normal();
    theta.set_from_flat(flat);
    const double v = forward(theta, x);
    sum += v;
    sum_sq += v * v;
  }
  MomentPrediction out;
  out.mean = sum / m;
  const double var = std::max(0.0, sum_sq / m - out.mean * out.mean);
  out.sigma = std::max(std::sqrt(var), kSigmaFloor);
  return out;
}

MomentPrediction posterior_predict(const PosteriorSamples& samples,
                                   const std::vector<int>& layer_dims, const Vec& x) {
  require(samples.samples.size() >= 2, ErrorCode::invalid_argument,
          "posterior prediction needs at least 2 stored samples");
  MlpParameters theta = shape_like(layer_dims);
  double sum = 0.0, sum_sq = 0.0;
  for (const Vec& flat : samples.samples) {
    theta.set_from_flat(flat);
    const double v = forward(theta, x);
    sum += v;
    sum_sq += v * v;
  }
  const double m = static_cast<double>(samples.samples.size());
  MomentPrediction out;
  out.mean = sum / m;
  const double var = std::max(0.0, sum_sq / m - out.mean * out.mean);
  out.sigma = std::max(std::sqrt(var), kSigmaFloor);
  return out;
}

UncertaintyModel make_vi_model(const VariationalParams& vp, int m, std::uint64_t seed,
                               std::string provenance) {
  UncertaintyModel model;
  model.kind = BaselineKind::vi;
  model.provenance = std::move(provenance);
  auto shared = std::make_shared<VariationalParams>(vp);
  model.mean = [shared, m, seed](const Vec& x) {
    return posterior_predict(*shared, x, m, seed).mean;
  };
  model.sigma = [shared, m, seed](const Vec& x) {
    return posterior_predict(*shared, x, m, seed).sigma;
  };
  model.mean_batch = [shared, m, seed](const Mat& X) {
    RowVec sum = RowVec::Zero(X.cols());
    MlpParameters theta = shape_like(shared->layer_dims);
    const Vec sig = shared->sigma();
    Rng rng(derive_seed(seed, "vi-predict"));
    Vec flat(shared->mu.size());
    for (int s = 0; s < m; ++s) {
      for (Eigen::Index i = 0; i < flat.size(); ++i) {
        flat[i] = shared->mu[i] + sig[i] * rng.normal();
      }
      theta.set_from_flat(flat);
      sum += forward_batch(theta, X);
    }
    return (sum / m).eval();
  };
  model.sigma_batch = [shared, m, seed](const Mat& X) {
    RowVec sum = RowVec::Zero(X.cols());
    RowVec sum_sq = RowVec::Zero(X.cols());
    MlpParameters theta = shape_like(shared->layer_dims);
    const Vec sig = shared->sigma();
    Rng rng(derive_seed(seed, "vi-predict"));
    Vec flat(shared->mu.size());
    for (int s = 0; s < m; ++s) {
      for (Eigen::Index i = 0; i < flat.size(); ++i) {
        flat[i] = shared->mu[i] + sig[i] * rng.normal();
      }
      theta.set_from_flat(flat);
      const RowVec v = forward_batch(theta, X);
      sum += v;
      sum_sq += v.cwiseProduct(v);
    }
    const RowVec mean = sum / m;
    return ((sum_sq / m - mean.cwiseProduct(mean)).cwiseMax(0.0))
        .cwiseSqrt()
        .cwiseMax(kSigmaFloor)
        .eval();
  };
  return model;
}

UncertaintyModel make_hmc_model(const PosteriorSamples& samples,
                                const std::vector<int>& layer_dims,
                                std::string provenance) {
  UncertaintyModel model;
  model.kind = BaselineKind::hmc;
  model.provenance = std::move(provenance);
  auto shared = std::make_shared<PosteriorSamples>(samples);
  auto dims = std::make_shared<std::vector<int>>(layer_dims);
  model.mean = [shared, dims](const Vec& x) {
    return posterior_predict(*shared, *dims, x).mean;
  };
  model.sigma = [shared, dims](const Vec& x) {
    return posterior_predict(*shared, *dims, x).sigma;
  };
  model.mean_batch = [shared, dims](const Mat& X) {
    RowVec sum = RowVec::Zero(X.cols());
    MlpParameters theta = shape_like(*dims);
    for (const Vec& flat : shared->samples) {
      theta.set_from_flat(flat);
      sum += forward_batch(theta, X);
    }
    return (sum / static_cast<double>(shared->samples.size())).eval();
  };
  model.sigma_batch = [shared, dims](const Mat& X) {
    RowVec sum = RowVec::Zero(X.cols());
    RowVec sum_sq = RowVec::Zero(X.cols());
    MlpParameters theta = shape_like(*dims);
    for (const Vec& flat : shared->samples) {
      theta.set_from_flat(flat);
      const RowVec v = forward_batch(theta, X);
      sum += v;
      sum_sq += v.cwiseProduct(v);
    }
    const double m = static_cast<double>(shared->samples.size());
    const RowVec mean = sum / m;
    return ((sum_sq / m - mean.cwiseProduct(mean)).cwiseMax(0.0))
        .cwiseSqrt()
        .cwiseMax(kSigmaFloor)
        .eval();
  };
  return model;
}

nlohmann::ordered_json vi_params_to_json(const VariationalParams& vp) {
  nlohmann::ordered_json j;
  j["layer_dims"] = vp.layer_dims;
  j["prior_std"] = vp.prior_std;
  j["seed"] = vp.seed;
  j["mu"] = std::vector<double>(vp.mu.data(), vp.mu.data() + vp.mu.size());
  j["rho"] = std::vector<double>(vp.rho.data(), vp.rho.data() + vp.rho.size());
  return j;
}

VariationalParams vi_params_from_json(const nlohmann::json& j) {
  VariationalParams vp;
  try {
    vp.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    vp.prior_std = j.at("prior_std").get<double>();
    vp.seed = j.at("seed").get<std::uint64_t>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto rho = j.at("rho").get<std::vector<double>>();
    require(mu.size() == rho.size(), ErrorCode::parse_error,
            "vi checkpoint: mu and rho lengths differ");
    vp.mu = Eigen::Map<const Vec>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    vp.rho = Eigen::Map<const Vec>(rho.data(), static_cast<Eigen::Index>(rho.size()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, std::string("malformed vi checkpoint: ") + e.what());
  }
  return vp;
}

nlohmann::ordered_json posterior_samples_to_json(const PosteriorSamples& samples) {
  nlohmann::ordered_json j;
  j["method"] = samples.method;
  j["acceptance_rate"] = samples.acceptance_rate;
  j["low_acceptance_warning"] = samples.low_acceptance_warning;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const Vec& s : samples.samples) {
    arr.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  }
  j["samples"] = std::move(arr);
  return j;
}

PosteriorSamples posterior_samples_from_json(const nlohmann::json& j) {
  PosteriorSamples out;
  try {
    out.method = j.at("method").get<std::string>();
    out.acceptance_rate = j.at("acceptance_rate").get<double>();
    out.low_acceptance_warning = j.value("low_acceptance_warning", false);
    for (const auto& s : j.at("samples")) {
      const auto v = s.get<std::vector<double>>();
      out.samples.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, std::string("malformed posterior samples: ") + e.what());
  }
  return out;
}

}  // namespace cpinn
