#include <doctest.h>

#include <cmath>

#include "core/datagen.hpp"
#include "core/diff_engine.hpp"
#include "core/errors.hpp"
#include "core/problems.hpp"
#include "core/rng.hpp"
#include "core/threading.hpp"
#include "core/training.hpp"
#include "oracles.hpp"

using namespace cpinn;
namespace oracle = cpinn::testing;

namespace {

struct SmallProblem {
  PdeProblem problem;
  LabeledSet data;
  CollocationSet colloc;

  LossContext ctx() const { return LossContext{&problem, &data, &colloc}; }
};

SmallProblem make_small(ProblemName name, int n_data, int n_interior) {
  SmallProblem s;
  s.problem = make_problem(name);
  NoiseModel m;
  m.kind = NoiseModel::Kind::homoskedastic;
  m.sigma = 0.05;
  const LabeledSplit split = sample_dataset(s.problem, n_data, 1, 0, m, 7);
  s.data = split.train;
  CollocationSpec spec;
  spec.interior = n_interior;
  s.colloc = make_collocation(s.problem, spec);
  return s;
}

double composite_loss_flat(const MlpParameters& shape, const Vec& flat,
                           const LossContext& ctx, const TrainConfig& cfg) {
  MlpParameters p = shape;
  p.set_from_flat(flat);
  return composite_loss(p, ctx, cfg).total;
}

}  // namespace

TEST_CASE("composite loss with all weights zero is zero") {
  const SmallProblem s = make_small(ProblemName::poisson_1d, 5, 4);
  const MlpParameters p = init_xavier({1, 6, 1}, 3);
  TrainConfig cfg;
  cfg.lambda_data = cfg.lambda_pde = cfg.lambda_ic = cfg.lambda_bc = 0.0;
  CHECK(composite_loss(p, s.ctx(), cfg).total == 0.0);
}

TEST_CASE("data-only loss on one point is the squared error") {
  SmallProblem s = make_small(ProblemName::poisson_1d, 1, 4);
  s.data.X = Mat::Constant(1, 1, 0.3);
  s.data.u = Vec::Constant(1, 2.0);
  MlpParameters p;
  p.layer_dims = {1, 2, 1};
  p.weights = {Mat::Zero(2, 1), Mat::Zero(1, 2)};
  p.biases = {Vec::Zero(2), Vec::Zero(1)};  // u_theta == 0
  TrainConfig cfg;
  cfg.lambda_data = 1.0;
  cfg.lambda_pde = cfg.lambda_bc = cfg.lambda_ic = 0.0;
  const LossTerms terms = composite_loss(p, s.ctx(), cfg);
  CHECK(terms.total == doctest::Approx(4.0));
  CHECK(terms.data == doctest::Approx(4.0));
}

TEST_CASE("loss terms vanish on the analytic solution") {
  // assemble every term from the closed-form evaluator: noiseless data,
  // residuals and boundary traces are all exactly satisfied
  for (const auto name : {ProblemName::poisson_1d, ProblemName::allen_cahn_2d}) {
    const PdeProblem p = make_problem(name);
    NoiseModel none;
    const LabeledSplit split = sample_dataset(p, 40, 1, 0, none, 5);
    const CollocationSet colloc = make_collocation(p);

    double data_mse = 0.0;
    for (int j = 0; j < split.train.size(); ++j) {
      const double e = exact_solution(p, split.train.X.col(j)) - split.train.u[j];
      data_mse += e * e;
    }
    data_mse /= split.train.size();

    double pde_mse = 0.0;
    for (Eigen::Index j = 0; j < colloc.interior.cols(); ++j) {
      const Vec x = colloc.interior.col(j);
      const double r = residual_from_triple(p, exact_solution_derivs(p, x), x);
      pde_mse += r * r;
    }
    pde_mse /= static_cast<double>(colloc.interior.cols());

    double bc_mse = 0.0;
    for (Eigen::Index j = 0; j < colloc.boundary.cols(); ++j) {
      const Vec x = colloc.boundary.col(j);
      const double e = exact_solution(p, x) - boundary_value(p, x);
      bc_mse += e * e;
    }
    bc_mse /= static_cast<double>(colloc.boundary.cols());

    CHECK(data_mse + pde_mse + bc_mse < 1e-8);
  }
}

TEST_CASE("composite gradient matches finite differences on every benchmark") {
  for (const auto name : {ProblemName::poisson_1d, ProblemName::oscillator_1d,
                          ProblemName::allen_cahn_2d, ProblemName::helmholtz_3d}) {
    const PdeProblem problem = make_problem(name);
    SmallProblem s = make_small(name, 6, name == ProblemName::allen_cahn_2d ? 9 : 8);
    std::vector<int> dims{problem.dim, 5, 4, 1};
    const MlpParameters p = init_xavier(dims, 17);
    TrainConfig cfg;
    cfg.lambda_data = 1.0;
    cfg.lambda_pde = 0.7;
    cfg.lambda_ic = problem.has_initial_condition() ? 1.3 : 0.0;
    cfg.lambda_bc = problem.has_boundary_points() ? 2.1 : 0.0;

    Vec grad = Vec::Zero(static_cast<Eigen::Index>(p.parameter_count()));
    composite_loss_grad(p, s.ctx(), cfg, grad);
    const Vec fd = oracle::fd_gradient(
        [&](const Vec& flat) { return composite_loss_flat(p, flat, s.ctx(), cfg); },
        p.flatten(), 1e-5);
    CHECK(oracle::max_rel_err(grad, fd, 1e-4) < 2e-5);
  }
}

TEST_CASE("gradients are identical for any worker count") {
  const SmallProblem s = make_small(ProblemName::allen_cahn_2d, 300, 289);
  const MlpParameters p = init_xavier({2, 8, 8, 1}, 23);
  TrainConfig cfg;
  cfg.lambda_data = 1.0;
  cfg.lambda_pde = 1.0;
  cfg.lambda_bc = 5.0;

  const int saved = thread_count();
  set_thread_count(1);
  Vec g1 = Vec::Zero(static_cast<Eigen::Index>(p.parameter_count()));
  composite_loss_grad(p, s.ctx(), cfg, g1);
  set_thread_count(2);
  Vec g2 = Vec::Zero(static_cast<Eigen::Index>(p.parameter_count()));
  composite_loss_grad(p, s.ctx(), cfg, g2);
  set_thread_count(saved);
  for (Eigen::Index i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("adam trajectory matches the reference implementation") {
  // diagonal quadratic: f(x) = 0.5 sum c_i x_i^2, gradient c_i x_i
  const Vec c = (Vec(4) << 1.0, 2.0, 0.5, 4.0).finished();
  Vec x = (Vec(4) << 1.0, -2.0, 3.0, 0.5).finished();
  std::vector<double> x_ref(x.data(), x.data() + x.size());

  AdamOptimizer adam(4);
  oracle::ReferenceAdam ref(4);
  for (int step = 0; step < 100; ++step) {
    const Vec g = c.cwiseProduct(x);
    std::vector<double> g_ref(4);
    for (int i = 0; i < 4; ++i) {
      g_ref[static_cast<std::size_t>(i)] = c[i] * x_ref[static_cast<std::size_t>(i)];
    }
    adam.step(x, g, 1e-2);
    ref.step(x_ref, g_ref, 1e-2);
    for (int i = 0; i < 4; ++i) {
      CHECK(std::abs(x[i] - x_ref[static_cast<std::size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("adam converges on a scalar quadratic") {
  // minimize (w - 3)^2 with the library optimizer
  Vec w = Vec::Zero(1);
  AdamOptimizer adam(1);
  for (int step = 0; step < 2000; ++step) {
    const Vec g = Vec::Constant(1, 2.0 * (w[0] - 3.0));
    adam.step(w, g, 0.05);
  }
  CHECK(std::abs(w[0] - 3.0) < 1e-6);
}

TEST_CASE("training is deterministic in the seed") {
  const SmallProblem s = make_small(ProblemName::poisson_1d, 20, 16);
  TrainConfig cfg;
  cfg.lambda_data = 1.0;
  cfg.lambda_pde = 1.0;
  cfg.lambda_bc = 5.0;
  cfg.epochs = 40;
  cfg.lr = 1e-3;
  cfg.seed = 12;
  auto [p1, r1] = train_adam(init_xavier({1, 8, 8, 1}, cfg.seed), s.ctx(), cfg);
  auto [p2, r2] = train_adam(init_xavier({1, 8, 8, 1}, cfg.seed), s.ctx(), cfg);
  const Vec f1 = p1.flatten(), f2 = p2.flatten();
  for (Eigen::Index i = 0; i < f1.size(); ++i) CHECK(f1[i] == f2[i]);
  CHECK(r1.trace.size() == 40);
  for (std::size_t e = 0; e < r1.trace.size(); ++e) {
    CHECK(r1.trace[e].total == r2.trace[e].total);
  }
}

TEST_CASE("training reduces the loss and the smoothed trace is monotone") {
  const SmallProblem s = make_small(ProblemName::poisson_1d, 30, 36);
  TrainConfig cfg;
  cfg.lambda_data = 1.0;
  cfg.lambda_pde = 1.0;
  cfg.lambda_bc = 5.0;
  cfg.epochs = 600;
  cfg.lr = 2e-3;
  cfg.seed = 4;
  auto [params, report] = train_adam(init_xavier({1, 12, 12, 1}, cfg.seed), s.ctx(), cfg);
  CHECK(report.trace.back().total < 0.25 * report.trace.front().total);
  std::vector<double> totals;
  for (const auto& t : report.trace) totals.push_back(t.total);
  CHECK(smoothed_nonincreasing(totals, 100, 1e-4));
}

TEST_CASE("divergence reports the epoch") {
  const SmallProblem s = make_small(ProblemName::poisson_1d, 10, 8);
  TrainConfig cfg;
  cfg.lambda_data = 1.0;
  cfg.lambda_pde = 1.0;
  cfg.lambda_bc = 1.0;
  cfg.epochs = 4000;
  cfg.lr = 1e18;  // drives tanh saturation then overflow in the residual term
  cfg.seed = 5;
  try {
    train_adam(init_xavier({1, 8, 1}, 5), s.ctx(), cfg);
    // very aggressive steps may still stay finite through tanh saturation;
    // accept either outcome but demand the error format when thrown
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::divergence);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("terms with zero weight are skipped even when their inputs are absent") {
  const PdeProblem problem = make_problem(ProblemName::poisson_1d);
  LossContext ctx{&problem, nullptr, nullptr};
  TrainConfig cfg;
  cfg.lambda_data = 0.0;
  cfg.lambda_pde = 0.0;
  cfg.lambda_bc = 0.0;
  const MlpParameters p = init_xavier({1, 4, 1}, 2);
  CHECK(composite_loss(p, ctx, cfg).total == 0.0);
  cfg.lambda_data = 1.0;
  CHECK_THROWS_AS(composite_loss(p, ctx, cfg), Error);
}

TEST_CASE("learning-rate decay interval defaults to a third of the epochs") {
  // observable through determinism: explicit every=epochs/3 equals default
  const SmallProblem s = make_small(ProblemName::poisson_1d, 12, 8);
  TrainConfig a;
  a.lambda_data = 1.0;
  a.lambda_pde = 1.0;
  a.lambda_bc = 1.0;
  a.epochs = 30;
  a.lr = 1e-3;
  a.seed = 8;
  TrainConfig b = a;
  b.decay.every = 10;
  auto [pa, ra] = train_adam(init_xavier({1, 6, 1}, 8), s.ctx(), a);
  auto [pb, rb] = train_adam(init_xavier({1, 6, 1}, 8), s.ctx(), b);
  CHECK((pa.flatten() - pb.flatten()).cwiseAbs().maxCoeff() == 0.0);
}
