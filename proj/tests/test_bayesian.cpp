#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "core/bayesian.hpp"
#include "core/datagen.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"
#include "oracles.hpp"

using namespace cpinn;
namespace oracle = cpinn::testing;

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double softplus_inv(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("kl divergence is zero for identical gaussians") {
  const Vec mu = Vec::Zero(5);
  const Vec rho = Vec::Constant(5, softplus_inv(1.0));
  CHECK(kl_mean_field(mu, rho, 1.0) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("kl divergence closed-form reference value") {
  const Vec mu = Vec::Constant(1, 1.0);
  const Vec rho = Vec::Constant(1, softplus_inv(1.0));
  CHECK(kl_mean_field(mu, rho, 1.0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("kl divergence matches a monte carlo estimate") {
  // KL(q||p) = E_q[log q - log p] over a large sample
  Rng rng(71);
  const double mu = 0.7, sigma = 0.6, s0 = 1.3;
  const Vec mu_v = Vec::Constant(1, mu);
  const Vec rho_v = Vec::Constant(1, softplus_inv(sigma));
  const double closed = kl_mean_field(mu_v, rho_v, s0);

  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double theta = mu + sigma * rng.normal();
    const double log_q =
        -0.5 * std::pow((theta - mu) / sigma, 2) - std::log(sigma);
    const double log_p = -0.5 * std::pow(theta / s0, 2) - std::log(s0);
    acc += log_q - log_p;
  }
  const double mc = acc / n;
  CHECK(oracle::rel_err(closed, mc) < 0.01);
}

TEST_CASE("kl divergence is non-negative on random inputs") {
  Rng rng(72);
  for (int trial = 0; trial < 200; ++trial) {
    Vec mu(3), rho(3);
    for (int i = 0; i < 3; ++i) {
      mu[i] = rng.normal();
      rho[i] = rng.uniform(-3.0, 2.0);
    }
    const double s0 = rng.uniform(0.2, 3.0);
    CHECK(kl_mean_field(mu, rho, s0) >= -1e-12);
  }
  CHECK_THROWS_AS(kl_mean_field(Vec::Zero(2), Vec::Zero(2), 0.0), Error);
}

namespace {

struct PinnSetup {
  PdeProblem problem;
  LabeledSet data;
  CollocationSet colloc;
  TrainConfig weights;
};

PinnSetup poisson_setup() {
  PinnSetup s;
  s.problem = make_problem(ProblemName::poisson_1d);
  NoiseModel m;
  m.kind = NoiseModel::Kind::homoskedastic;
  m.sigma = 0.15;
  s.data = sample_dataset(s.problem, 12, 1, 0, m, 3).train;
  CollocationSpec spec;
  spec.interior = 8;
  s.colloc = make_collocation(s.problem, spec);
  s.weights.lambda_data = 1.0;
  s.weights.lambda_pde = 1.0;
  s.weights.lambda_bc = 2.0;
  return s;
}

}  // namespace

TEST_CASE("the elbo decomposition reuses the closed-form kl") {
  const PinnSetup s = poisson_setup();
  const LikelihoodContext ctx(s.problem, s.data, s.colloc, s.weights, 0.15);
  VariationalParams vp;
  vp.layer_dims = {1, 4, 1};
  vp.prior_std = 1.0;
  vp.mu = init_xavier(vp.layer_dims, 4).flatten();
  vp.rho = Vec::Constant(vp.mu.size(), softplus_inv(0.05));
  const ElboBreakdown elbo = negative_elbo(vp, ctx, 3, 99);
  CHECK(elbo.kl == kl_mean_field(vp.mu, vp.rho, vp.prior_std));
  CHECK(elbo.total == doctest::Approx(elbo.nll + elbo.kl).epsilon(1e-14));
}

TEST_CASE("collapsing the posterior recovers the deterministic likelihood") {
  const PinnSetup s = poisson_setup();
  const LikelihoodContext ctx(s.problem, s.data, s.colloc, s.weights, 0.15);
  VariationalParams vp;
  vp.layer_dims = {1, 4, 1};
  vp.prior_std = 1.0;
  vp.mu = init_xavier(vp.layer_dims, 4).flatten();
  vp.rho = Vec::Constant(vp.mu.size(), -40.0);  // sigma ~ 4e-18
  const ElboBreakdown elbo = negative_elbo(vp, ctx, 2, 5);
  LikelihoodContext flat_ctx = ctx;
  flat_ctx.set_layer_dims(vp.layer_dims);
  CHECK(elbo.nll == doctest::Approx(flat_ctx.neg_log_lik_flat(vp.mu)).epsilon(1e-9));
  CHECK(elbo.kl > 100.0);  // the collapse is heavily penalized
}

TEST_CASE("elbo gradients match finite differences at a fixed seed") {
  const PinnSetup s = poisson_setup();
  LikelihoodContext ctx(s.problem, s.data, s.colloc, s.weights, 0.15);
  ctx.set_layer_dims({1, 3, 1});
  const LogLikFns lik = pinn_likelihood(ctx);

  VariationalParams vp;
  vp.layer_dims = {1, 3, 1};
  vp.prior_std = 1.0;
  vp.mu = init_xavier(vp.layer_dims, 8).flatten();
  vp.rho = Vec::Constant(vp.mu.size(), softplus_inv(0.08));

  Vec gmu, grho;
  negative_elbo_grad(vp, lik, 2, 31, gmu, grho);

  auto value_at = [&](const Vec& mu, const Vec& rho) {
    VariationalParams probe = vp;
    probe.mu = mu;
    probe.rho = rho;
    return negative_elbo(probe, lik, 2, 31).total;
  };
  const Vec fd_mu = oracle::fd_gradient(
      [&](const Vec& mu) { return value_at(mu, vp.rho); }, vp.mu, 1e-5);
  const Vec fd_rho = oracle::fd_gradient(
      [&](const Vec& rho) { return value_at(vp.mu, rho); }, vp.rho, 1e-5);
  CHECK(oracle::max_rel_err(gmu, fd_mu, 1e-3) < 1e-4);
  CHECK(oracle::max_rel_err(grho, fd_rho, 1e-3) < 1e-4);
}

TEST_CASE("vi recovers the conjugate gaussian posterior") {
  // observations u_i ~ N(theta, s^2) with a N(0, s0^2) prior on the single
  // parameter theta: the posterior is gaussian with a closed form
  Rng rng(55);
  const double true_theta = 0.8, s_lik = 0.3, s0 = 1.0;
  const int n_obs = 24;
  Vec obs(n_obs);
  for (int i = 0; i < n_obs; ++i) obs[i] = true_theta + s_lik * rng.normal();

  LogLikFns lik;
  lik.neg_log_lik = [&](const Vec& theta) {
    double acc = 0.0;
    for (int i = 0; i < n_obs; ++i) acc += std::pow(obs[i] - theta[0], 2);
    return acc / (2.0 * s_lik * s_lik);
  };
  lik.neg_log_lik_grad = [&](const Vec& theta, Vec& grad) {
    double acc = 0.0, g = 0.0;
    for (int i = 0; i < n_obs; ++i) {
      acc += std::pow(obs[i] - theta[0], 2);
      g += (theta[0] - obs[i]);
    }
    grad[0] += g / (s_lik * s_lik);
    return acc / (2.0 * s_lik * s_lik);
  };

  VariationalParams vp0;
  vp0.layer_dims = {1, 1};
  vp0.prior_std = s0;
  vp0.mu = Vec::Zero(1);
  vp0.rho = Vec::Constant(1, softplus_inv(0.5));
  ViTrainConfig cfg;
  cfg.epochs = 12000;
  cfg.lr = 5e-3;
  cfg.mc_samples = 1;
  cfg.prior_std = s0;
  cfg.seed = 2;
  auto [vp, report] = train_vi(vp0, lik, cfg);

  const double precision = 1.0 / (s0 * s0) + n_obs / (s_lik * s_lik);
  const double post_var = 1.0 / precision;
  const double post_mean = (obs.sum() / (s_lik * s_lik)) * post_var;
  CHECK(oracle::rel_err(vp.mu[0], post_mean) < 0.02);
  CHECK(oracle::rel_err(softplus(vp.rho[0]), std::sqrt(post_var)) < 0.02);
}

TEST_CASE("vi training is deterministic and its smoothed trace trends down") {
  const PinnSetup s = poisson_setup();
  const LikelihoodContext ctx(s.problem, s.data, s.colloc, s.weights, 0.15);
  ViTrainConfig cfg;
  cfg.epochs = 400;
  cfg.lr = 2e-3;
  cfg.seed = 9;
  auto [vp1, r1] = train_vi({1, 6, 1}, ctx, cfg);
  auto [vp2, r2] = train_vi({1, 6, 1}, ctx, cfg);
  CHECK((vp1.mu - vp2.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((vp1.rho - vp2.rho).cwiseAbs().maxCoeff() == 0.0);

  // window-averaged negative elbo over the final two-thirds
  const std::size_t from = r1.elbo_trace.size() / 3;
  double early = 0.0, late = 0.0;
  for (std::size_t i = from; i < from + 50; ++i) early += r1.elbo_trace[i];
  for (std::size_t i = r1.elbo_trace.size() - 50; i < r1.elbo_trace.size(); ++i) {
    late += r1.elbo_trace[i];
  }
  CHECK(late <= early + 1e-9);
}

TEST_CASE("leapfrog is time-reversible") {
  auto grad_u = [](const Vec& theta, Vec& grad) { grad += theta; };  // U = |theta|^2/2
  Rng rng(12);
  Vec theta0(3), r0(3);
  for (int i = 0; i < 3; ++i) {
    theta0[i] = rng.normal();
    r0[i] = rng.normal();
  }
  Vec theta = theta0, r = r0;
  leapfrog(theta, r, 0.1, 25, grad_u);
  r = -r;
  leapfrog(theta, r, 0.1, 25, grad_u);
  CHECK((theta - theta0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((r + r0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("leapfrog free particle drifts linearly") {
  auto grad_u = [](const Vec&, Vec&) {};
  Vec theta = Vec::Constant(1, 0.3), r = Vec::Constant(1, 2.0);
  leapfrog(theta, r, 0.5, 1, grad_u);
  CHECK(theta[0] == doctest::Approx(0.3 + 0.5 * 2.0).epsilon(1e-14));
  CHECK(r[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("leapfrog energy error shrinks at second order") {
  auto u = [](const Vec& theta) { return 0.5 * theta.squaredNorm(); };
  auto grad_u = [](const Vec& theta, Vec& grad) { grad += theta; };
  auto energy_error = [&](double eps, int steps) {
    Vec theta = Vec::Constant(1, 1.0), r = Vec::Constant(1, 0.5);
    const double h0 = u(theta) + 0.5 * r.squaredNorm();
    leapfrog(theta, r, eps, steps, grad_u);
    return std::abs(u(theta) + 0.5 * r.squaredNorm() - h0);
  };
  const double coarse = energy_error(0.2, 50);     // T = 10
  const double fine = energy_error(0.05, 200);     // same horizon, eps / 4
  const double ratio = coarse / fine;
  CHECK(ratio > 10.0);
  CHECK(ratio < 22.0);
}

TEST_CASE("hmc samples a standard normal") {
  auto u = [](const Vec& theta) { return 0.5 * theta.squaredNorm(); };
  auto grad_u = [](const Vec& theta, Vec& grad) { grad += theta; };
  HmcConfig cfg;
  cfg.step_size = 0.2;
  cfg.n_leapfrog = 10;
  cfg.n_samples = 5000;
  cfg.n_burnin = 200;
  cfg.thin = 1;
  cfg.seed = 77;
  const PosteriorSamples out = hmc_sample(Vec::Zero(1), u, grad_u, cfg);
  REQUIRE(out.samples.size() == 5000);
  double mean = 0.0;
  for (const Vec& s : out.samples) mean += s[0];
  mean /= 5000.0;
  double var = 0.0;
  for (const Vec& s : out.samples) var += (s[0] - mean) * (s[0] - mean);
  var /= 5000.0;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
  CHECK(out.acceptance_rate > 0.9);
}

TEST_CASE("hmc recovers anisotropic marginal variances") {
  auto u = [](const Vec& theta) {
    return 0.5 * theta[0] * theta[0] + theta[1] * theta[1] / 8.0;
  };
  auto grad_u = [](const Vec& theta, Vec& grad) {
    grad[0] += theta[0];
    grad[1] += theta[1] / 4.0;
  };
  // trajectory length 2.0 stays clear of the half-period resonances of
  // both directions (periods 2*pi and 4*pi)
  HmcConfig cfg;
  cfg.step_size = 0.25;
  cfg.n_leapfrog = 8;
  cfg.n_samples = 12000;
  cfg.n_burnin = 300;
  cfg.thin = 2;
  cfg.seed = 31;
  const PosteriorSamples out = hmc_sample(Vec::Zero(2), u, grad_u, cfg);
  Vec mean = Vec::Zero(2), var = Vec::Zero(2);
  for (const Vec& s : out.samples) mean += s;
  mean /= static_cast<double>(out.samples.size());
  for (const Vec& s : out.samples) var += (s - mean).cwiseProduct(s - mean);
  var /= static_cast<double>(out.samples.size());
  CHECK(oracle::rel_err(var[0], 1.0) < 0.10);
  CHECK(oracle::rel_err(var[1], 4.0) < 0.10);
}

TEST_CASE("vanishing step size drives acceptance to one") {
  auto u = [](const Vec& theta) { return 0.5 * theta.squaredNorm(); };
  auto grad_u = [](const Vec& theta, Vec& grad) { grad += theta; };
  HmcConfig cfg;
  cfg.step_size = 1e-4;
  cfg.n_leapfrog = 5;
  cfg.n_samples = 200;
  cfg.n_burnin = 0;
  cfg.thin = 1;
  cfg.seed = 4;
  const PosteriorSamples out = hmc_sample(Vec::Zero(1), u, grad_u, cfg);
  CHECK(out.acceptance_rate > 0.999);
}

TEST_CASE("hmc chain statistics pass a chi-square goodness-of-fit check") {
  // mahalanobis radius^2 of a centered 2d gaussian follows chi^2(2);
  // decile cells give expected counts of n/10 each
  auto u = [](const Vec& theta) {
    return 0.5 * theta[0] * theta[0] + theta[1] * theta[1] / 8.0;
  };
  auto grad_u = [](const Vec& theta, Vec& grad) {
    grad[0] += theta[0];
    grad[1] += theta[1] / 4.0;
  };
  HmcConfig cfg;
  cfg.step_size = 0.22;
  cfg.n_leapfrog = 12;
  cfg.n_samples = 10000;
  cfg.n_burnin = 500;
  cfg.thin = 5;
  cfg.seed = 13;
  const PosteriorSamples out = hmc_sample(Vec::Zero(2), u, grad_u, cfg);

  std::array<int, 10> counts{};
  for (const Vec& s : out.samples) {
    const double r2 = s[0] * s[0] + s[1] * s[1] / 4.0;
    const double cdf = 1.0 - std::exp(-0.5 * r2);  // chi^2(2) cdf
    int cell = static_cast<int>(cdf * 10.0);
    cell = std::min(cell, 9);
    ++counts[static_cast<std::size_t>(cell)];
  }
  const double expected = out.samples.size() / 10.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 21.67);  // 1% critical value, 9 degrees of freedom
}

TEST_CASE("posterior prediction floors the spread of identical samples") {
  PosteriorSamples samples;
  samples.method = "hmc";
  samples.samples = {Vec::Constant(2, 0.5), Vec::Constant(2, 0.5)};
  // network with dims {1,1}: u(x) = w x + b
  const MomentPrediction p = posterior_predict(samples, {1, 1}, Vec::Constant(1, 0.3));
  CHECK(p.sigma == kSigmaFloor);
}

TEST_CASE("posterior prediction arithmetic over two samples") {
  PosteriorSamples samples;
  samples.method = "hmc";
  // u(x) = w x + b at x = 0: outputs are the biases 0 and 2
  samples.samples = {(Vec(2) << 1.0, 0.0).finished(), (Vec(2) << 1.0, 2.0).finished()};
  const MomentPrediction p = posterior_predict(samples, {1, 1}, Vec::Zero(1));
  CHECK(p.mean == doctest::Approx(1.0));
  CHECK(p.sigma == doctest::Approx(1.0));  // population variance over 2 draws
}

TEST_CASE("vi predictive spread grows with the posterior scales") {
  VariationalParams vp;
  vp.layer_dims = {1, 6, 1};
  vp.prior_std = 1.0;
  vp.mu = init_xavier(vp.layer_dims, 3).flatten();
  vp.rho = Vec::Constant(vp.mu.size(), softplus_inv(0.02));
  VariationalParams wide = vp;
  wide.rho = Vec::Constant(vp.mu.size(), softplus_inv(0.2));
  const Vec x = Vec::Constant(1, 0.4);
  const MomentPrediction narrow_p = posterior_predict(vp, x, 400, 8);
  const MomentPrediction wide_p = posterior_predict(wide, x, 400, 8);
  CHECK(wide_p.sigma > narrow_p.sigma);
}

TEST_CASE("variational and posterior checkpoints round trip") {
  VariationalParams vp;
  vp.layer_dims = {1, 3, 1};
  vp.prior_std = 1.4;
  vp.seed = 10;
  vp.mu = init_xavier(vp.layer_dims, 1).flatten();
  vp.rho = Vec::Constant(vp.mu.size(), -2.5);
  const VariationalParams vp2 = vi_params_from_json(vi_params_to_json(vp));
  CHECK((vp2.mu - vp.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((vp2.rho - vp.rho).cwiseAbs().maxCoeff() == 0.0);
  CHECK(vp2.prior_std == vp.prior_std);

  PosteriorSamples samples;
  samples.method = "hmc";
  samples.acceptance_rate = 0.73;
  samples.samples = {Vec::Constant(3, 1.0), Vec::Constant(3, -0.5)};
  const PosteriorSamples s2 = posterior_samples_from_json(posterior_samples_to_json(samples));
  CHECK(s2.method == "hmc");
  CHECK(s2.acceptance_rate == 0.73);
  REQUIRE(s2.samples.size() == 2);
  CHECK((s2.samples[1] - samples.samples[1]).cwiseAbs().maxCoeff() == 0.0);
}
