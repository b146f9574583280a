#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/diff_engine.hpp"
#include "core/errors.hpp"
#include "core/network.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"
#include "oracles.hpp"

using namespace cpinn;
namespace oracle = cpinn::testing;

namespace {

MlpParameters random_net(const std::vector<int>& dims, std::uint64_t seed) {
  return init_xavier(dims, seed);
}

// Flat-parameter view of a data MSE loss, used as the FD target.
double mse_loss_flat(const MlpParameters& shape, const Vec& flat, const Mat& X,
                     const Vec& u) {
  MlpParameters p = shape;
  p.set_from_flat(flat);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double e = forward(p, X.col(j)) - u[j];
    acc += e * e;
  }
  return acc / static_cast<double>(X.cols());
}

}  // namespace

TEST_CASE("single linear neuron derivatives") {
  // u(x) = 2x via a 1-1-1 net would pass through tanh; build 1-1 direct.
  MlpParameters p;
  p.layer_dims = {1, 1};
  p.weights = {Mat::Constant(1, 1, 2.0)};
  p.biases = {Vec::Zero(1)};
  const DualTriple t = eval_with_input_derivs(p, Vec::Constant(1, 3.0), true);
  CHECK(t.value == doctest::Approx(6.0));
  CHECK(t.grad[0] == doctest::Approx(2.0));
  CHECK(t.hess_diag[0] == doctest::Approx(0.0));
}

TEST_CASE("single tanh neuron at the origin") {
  // u(x) = tanh(x): unit weights, zero biases, identity output layer.
  MlpParameters p;
  p.layer_dims = {1, 1, 1};
  p.weights = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0)};
  p.biases = {Vec::Zero(1), Vec::Zero(1)};
  const DualTriple t = eval_with_input_derivs(p, Vec::Zero(1), true);
  CHECK(t.value == doctest::Approx(0.0));
  CHECK(t.grad[0] == doctest::Approx(1.0));
  CHECK(t.hess_diag[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("input derivatives match finite differences on random nets") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParameters p = random_net({2, 8, 7, 1}, 100 + trial);
    Vec x(2);
    x << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    const DualTriple t = eval_with_input_derivs(p, x, true);

    auto f = [&](const Vec& q) { return forward(p, q); };
    const Vec fd_grad = oracle::fd_gradient(f, x);
    const Vec fd_hess = oracle::fd_hess_diag(f, x);
    CHECK(oracle::max_rel_err(t.grad, fd_grad) < 1e-5);
    CHECK(oracle::max_rel_err(t.hess_diag, fd_hess, 1e-4) < 1e-5);
  }
}

TEST_CASE("batched evaluation agrees with the single-point path") {
  const MlpParameters p = random_net({3, 6, 5, 1}, 7);
  Rng rng(3);
  Mat X(3, 17);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (int i = 0; i < 3; ++i) X(i, j) = rng.uniform(-1.0, 1.0);
  }
  const BatchDerivs batch = eval_batch(p, X, DerivOrder::second);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const DualTriple t = eval_with_input_derivs(p, X.col(j), true);
    CHECK(batch.value[j] == doctest::Approx(t.value).epsilon(1e-14));
    CHECK((batch.grad.col(j) - t.grad).norm() < 1e-13);
    CHECK((batch.hess_diag.col(j) - t.hess_diag).norm() < 1e-13);
  }
}

TEST_CASE("derivative linearity over network combinations") {
  // derivatives of a*f + b*g from two nets, against the combined evaluation
  const MlpParameters f = random_net({2, 6, 1}, 11);
  const MlpParameters g = random_net({2, 6, 1}, 12);
  const double a = 1.7, b = -0.4;
  Vec x(2);
  x << 0.3, -0.8;
  const DualTriple tf = eval_with_input_derivs(f, x, true);
  const DualTriple tg = eval_with_input_derivs(g, x, true);

  // combined net: stack the two hidden layers and merge output weights
  MlpParameters combo;
  combo.layer_dims = {2, 12, 1};
  Mat W0(12, 2);
  W0.topRows(6) = f.weights[0];
  W0.bottomRows(6) = g.weights[0];
  Vec b0(12);
  b0.head(6) = f.biases[0];
  b0.tail(6) = g.biases[0];
  Mat W1(1, 12);
  W1.leftCols(6) = a * f.weights[1];
  W1.rightCols(6) = b * g.weights[1];
  combo.weights = {W0, W1};
  combo.biases = {b0, Vec::Constant(1, a * f.biases[1][0] + b * g.biases[1][0])};

  const DualTriple tc = eval_with_input_derivs(combo, x, true);
  CHECK(tc.value == doctest::Approx(a * tf.value + b * tg.value).epsilon(1e-12));
  CHECK((tc.grad - (a * tf.grad + b * tg.grad)).norm() < 1e-12);
  CHECK((tc.hess_diag - (a * tf.hess_diag + b * tg.hess_diag)).norm() < 1e-12);
}

TEST_CASE("dimension mismatch raises a structured error") {
  const MlpParameters p = random_net({2, 4, 1}, 5);
  CHECK_THROWS_AS(eval_with_input_derivs(p, Vec::Zero(3), true), Error);
}

TEST_CASE("non-finite propagation names the layer") {
  MlpParameters p = random_net({1, 3, 1}, 6);
  p.weights[1](0, 0) = std::numeric_limits<double>::infinity();
  try {
    eval_with_input_derivs(p, Vec::Constant(1, 0.5), false);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::numeric_error);
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

TEST_CASE("tape gradient of w^2") {
  MlpParameters p;
  p.layer_dims = {1, 1};
  p.weights = {Mat::Constant(1, 1, 3.0)};
  p.biases = {Vec::Zero(1)};
  const Vec g = loss_grad_params(
      [](Tape& tape, std::span<const Tape::Var> params) {
        return tape.square(params[0]);
      },
      p);
  CHECK(g[0] == doctest::Approx(6.0));
  CHECK(g[1] == doctest::Approx(0.0));  // unused bias
}

TEST_CASE("tape gradient vanishes at an exact fit") {
  // single neuron fit to its own output: loss (u(x) - u(x))^2 = 0
  const MlpParameters p = random_net({1, 1}, 9);
  const Vec x = Vec::Constant(1, 0.7);
  const double target = forward(p, x);
  const Vec g = loss_grad_params(
      [&](Tape& tape, std::span<const Tape::Var> params) {
        const Tape::Var u = tape_mlp_forward(tape, params, p.layer_dims, x);
        return tape.square(tape.sub(u, tape.constant(target)));
      },
      p);
  CHECK(g.norm() < 1e-12);
}

TEST_CASE("tape mlp loss gradient matches finite differences") {
  const MlpParameters p = random_net({2, 5, 4, 1}, 21);
  Rng rng(22);
  Mat X(2, 5);
  Vec u(5);
  for (int j = 0; j < 5; ++j) {
    X(0, j) = rng.uniform(-1.0, 1.0);
    X(1, j) = rng.uniform(-1.0, 1.0);
    u[j] = rng.normal();
  }
  const Vec grad = loss_grad_params(
      [&](Tape& tape, std::span<const Tape::Var> params) {
        std::vector<Tape::Var> sq;
        for (int j = 0; j < 5; ++j) {
          const Tape::Var out = tape_mlp_forward(tape, params, p.layer_dims, X.col(j));
          sq.push_back(tape.square(tape.sub(out, tape.constant(u[j]))));
        }
        return tape.mean(sq);
      },
      p);
  const Vec fd = oracle::fd_gradient(
      [&](const Vec& flat) { return mse_loss_flat(p, flat, X, u); }, p.flatten());
  CHECK(oracle::max_rel_err(grad, fd, 1e-5) < 1e-5);
}

TEST_CASE("tape primitives: softplus, log, exp match finite differences") {
  const Vec x0 = (Vec(3) << 0.4, -1.3, 2.2).finished();
  auto build = [](Tape& tape, std::span<const Tape::Var> v) {
    const Tape::Var a = tape.softplus(v[0]);
    const Tape::Var b = tape.log_(tape.exp_(v[1]));
    const Tape::Var c = tape.mul(tape.exp_(v[2]), tape.cmul(0.5, v[0]));
    return tape.add(tape.add(a, b), c);
  };
  Tape tape;
  std::vector<Tape::Var> vars;
  for (Eigen::Index i = 0; i < x0.size(); ++i) vars.push_back(tape.input(x0[i]));
  const Tape::Var out = build(tape, vars);
  const Vec grad = tape.gradient(out, vars);

  const Vec fd = oracle::fd_gradient(
      [&](const Vec& q) {
        Tape t2;
        std::vector<Tape::Var> v2;
        for (Eigen::Index i = 0; i < q.size(); ++i) v2.push_back(t2.input(q[i]));
        return build(t2, v2).val;
      },
      x0, 1e-5);
  CHECK(oracle::max_rel_err(grad, fd, 1e-6) < 1e-6);
}

TEST_CASE("tape log of a non-positive value is a structured error") {
  Tape tape;
  const Tape::Var v = tape.input(-2.0);
  CHECK_THROWS_AS(tape.log_(v), Error);
}

TEST_CASE("tape gradients are bit-identical across repeated calls") {
  const MlpParameters p = random_net({1, 6, 1}, 33);
  const Vec x = Vec::Constant(1, 0.25);
  auto loss = [&](Tape& tape, std::span<const Tape::Var> params) {
    return tape.square(tape_mlp_forward(tape, params, p.layer_dims, x));
  };
  const Vec g1 = loss_grad_params(loss, p);
  const Vec g2 = loss_grad_params(loss, p);
  for (Eigen::Index i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("parameter gradients from the batched engine match the tape route") {
  const MlpParameters p = random_net({2, 5, 3, 1}, 55);
  Rng rng(56);
  Mat X(2, 4);
  Vec u(4);
  for (int j = 0; j < 4; ++j) {
    X(0, j) = rng.uniform(-1.0, 1.0);
    X(1, j) = rng.uniform(-1.0, 1.0);
    u[j] = rng.normal();
  }

  // batched engine route
  MlpDerivEngine engine(p);
  engine.forward(X, DerivOrder::value);
  const RowVec err = engine.value() - u.transpose();
  Vec g_engine = Vec::Zero(static_cast<Eigen::Index>(p.parameter_count()));
  const RowVec seed = (2.0 / 4.0) * err;
  engine.backward(seed, nullptr, nullptr, g_engine);

  // tape route
  const Vec g_tape = loss_grad_params(
      [&](Tape& tape, std::span<const Tape::Var> params) {
        std::vector<Tape::Var> sq;
        for (int j = 0; j < 4; ++j) {
          const Tape::Var out = tape_mlp_forward(tape, params, p.layer_dims, X.col(j));
          sq.push_back(tape.square(tape.sub(out, tape.constant(u[j]))));
        }
        return tape.mean(sq);
      },
      p);
  CHECK((g_engine - g_tape).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("second-order seeded backward matches finite differences of the laplacian") {
  // d(sum of hess entries)/d(params) via the engine against FD of the
  // laplacian computed with first-order dual evaluation.
  const MlpParameters p = random_net({2, 6, 5, 1}, 77);
  Vec x(2);
  x << 0.37, -0.21;

  MlpDerivEngine engine(p);
  engine.forward(x, DerivOrder::second);
  Vec g_engine = Vec::Zero(static_cast<Eigen::Index>(p.parameter_count()));
  const RowVec vbar = RowVec::Zero(1);
  const Mat gbar = Mat::Zero(2, 1);
  const Mat hbar = Mat::Ones(2, 1);
  engine.backward(vbar, &gbar, &hbar, g_engine);

  const Vec fd = oracle::fd_gradient(
      [&](const Vec& flat) {
        MlpParameters q = p;
        q.set_from_flat(flat);
        return eval_with_input_derivs(q, x, true).hess_diag.sum();
      },
      p.flatten(), 1e-5);
  CHECK(oracle::max_rel_err(g_engine, fd, 1e-4) < 1e-5);
}
