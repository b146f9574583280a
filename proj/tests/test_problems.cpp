#include <doctest.h>

#include <cmath>
#include <numbers>

#include "core/errors.hpp"
#include "core/problems.hpp"
#include "core/rng.hpp"

using namespace cpinn;

namespace {

constexpr double kPi = std::numbers::pi;

Vec random_interior(const PdeProblem& p, Rng& rng) {
  Vec x(p.dim);
  for (int i = 0; i < p.dim; ++i) {
    x[i] = rng.uniform(p.lo[i] + 1e-6, p.hi[i] - 1e-6);
  }
  return x;
}

}  // namespace

TEST_CASE("exact solutions at reference points") {
  const PdeProblem poisson = make_problem(ProblemName::poisson_1d);
  CHECK(exact_solution(poisson, Vec::Constant(1, 0.5)) == doctest::Approx(1.0));

  const PdeProblem helm = make_problem(ProblemName::helmholtz_3d);
  CHECK(exact_solution(helm, (Vec(3) << 0.0, 0.3, 0.9).finished()) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(exact_solution(helm, (Vec(3) << 0.4, 1.0, 0.2).finished()) ==
        doctest::Approx(0.0).epsilon(1e-12));

  const PdeProblem osc = make_problem(ProblemName::oscillator_1d);
  CHECK(exact_solution(osc, Vec::Zero(1)) == doctest::Approx(1.0));
}

TEST_CASE("oscillator closed form satisfies the initial velocity") {
  const PdeProblem osc = make_problem(ProblemName::oscillator_1d);
  const DualTriple t0 = exact_solution_derivs(osc, Vec::Zero(1));
  CHECK(t0.value == doctest::Approx(osc.u0));
  CHECK(t0.grad[0] == doctest::Approx(osc.v0).epsilon(1e-12));
}

TEST_CASE("forcing at reference points") {
  const PdeProblem poisson = make_problem(ProblemName::poisson_1d);
  CHECK(forcing(poisson, Vec::Constant(1, 0.5)) == doctest::Approx(-kPi * kPi));

  const PdeProblem osc = make_problem(ProblemName::oscillator_1d);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    CHECK(forcing(osc, random_interior(osc, rng)) == 0.0);
  }

  const PdeProblem ac = make_problem(ProblemName::allen_cahn_2d);
  CHECK(forcing(ac, (Vec(2) << 0.5, 0.5).finished()) ==
        doctest::Approx(-0.1 * kPi * kPi).epsilon(1e-12));
}

TEST_CASE("the exact solution annihilates each residual") {
  Rng rng(7);
  for (const auto name : {ProblemName::poisson_1d, ProblemName::oscillator_1d,
                          ProblemName::allen_cahn_2d, ProblemName::helmholtz_3d}) {
    const PdeProblem p = make_problem(name);
    auto evaluator = [&](const Vec& x) { return exact_solution_derivs(p, x); };
    for (int i = 0; i < 1000; ++i) {
      const Vec x = random_interior(p, rng);
      CHECK(std::abs(residual(p, evaluator, x)) < 1e-8);
    }
  }
}

TEST_CASE("zero network residual on poisson equals pi^2 at the midpoint") {
  const PdeProblem p = make_problem(ProblemName::poisson_1d);
  auto zero_eval = [&](const Vec& x) {
    DualTriple t;
    t.value = 0.0;
    t.grad = Vec::Zero(x.size());
    t.hess_diag = Vec::Zero(x.size());
    return t;
  };
  CHECK(residual(p, zero_eval, Vec::Constant(1, 0.5)) == doctest::Approx(kPi * kPi));
}

TEST_CASE("forcing consistency for linear operators") {
  // plugging the exact derivatives into the operator reproduces the forcing
  Rng rng(9);
  for (const auto name : {ProblemName::poisson_1d, ProblemName::helmholtz_3d}) {
    const PdeProblem p = make_problem(name);
    for (int i = 0; i < 200; ++i) {
      const Vec x = random_interior(p, rng);
      const DualTriple t = exact_solution_derivs(p, x);
      double op = 0.0;
      if (name == ProblemName::poisson_1d) {
        op = t.hess_diag[0];
      } else {
        op = t.hess_diag.sum() + p.wavenumber * p.wavenumber * t.value;
      }
      CHECK(std::abs(op - forcing(p, x)) < 1e-10);
    }
  }
}

TEST_CASE("boundary data matches the exact solution trace") {
  const PdeProblem poisson = make_problem(ProblemName::poisson_1d);
  CHECK(boundary_value(poisson, Vec::Zero(1)) == 0.0);
  CHECK(boundary_value(poisson, Vec::Ones(1)) == 0.0);

  const PdeProblem ac = make_problem(ProblemName::allen_cahn_2d);
  const CollocationSet set = make_collocation(ac);
  for (Eigen::Index j = 0; j < set.boundary.cols(); j += 37) {
    const Vec x = set.boundary.col(j);
    CHECK(boundary_value(ac, x) ==
          doctest::Approx(exact_solution(ac, x)).epsilon(1e-14));
  }
}

TEST_CASE("collocation counts match the benchmark specifications") {
  const CollocationSet poisson = make_collocation(make_problem(ProblemName::poisson_1d));
  CHECK(poisson.interior.cols() == 200);
  CHECK(poisson.boundary.cols() == 2);

  const CollocationSet ac = make_collocation(make_problem(ProblemName::allen_cahn_2d));
  CHECK(ac.interior.cols() == 1024);
  CHECK(ac.boundary.cols() == 800);

  const CollocationSet helm = make_collocation(make_problem(ProblemName::helmholtz_3d));
  CHECK(helm.interior.cols() == 8000);
  CHECK(helm.boundary.cols() == 6144);

  const CollocationSet osc = make_collocation(make_problem(ProblemName::oscillator_1d));
  CHECK(osc.interior.cols() == 200);
  CHECK(osc.initial.cols() == 1);
  CHECK(osc.initial(0, 0) == 0.0);
  CHECK(osc.interior.row(0).maxCoeff() == doctest::Approx(5.0));
  CHECK(osc.interior.row(0).minCoeff() > 0.0);
}

TEST_CASE("interior collocation points are strictly inside the domain") {
  for (const auto name : {ProblemName::poisson_1d, ProblemName::allen_cahn_2d,
                          ProblemName::helmholtz_3d}) {
    const PdeProblem p = make_problem(name);
    const CollocationSet set = make_collocation(p);
    for (Eigen::Index j = 0; j < set.interior.cols(); ++j) {
      for (int i = 0; i < p.dim; ++i) {
        CHECK(set.interior(i, j) > p.lo[i]);
        CHECK(set.interior(i, j) < p.hi[i]);
      }
    }
  }
}

TEST_CASE("boundary collocation points lie on the boundary") {
  for (const auto name : {ProblemName::allen_cahn_2d, ProblemName::helmholtz_3d}) {
    const PdeProblem p = make_problem(name);
    const CollocationSet set = make_collocation(p);
    for (Eigen::Index j = 0; j < set.boundary.cols(); ++j) {
      bool on_face = false;
      for (int i = 0; i < p.dim; ++i) {
        on_face = on_face || set.boundary(i, j) == p.lo[i] || set.boundary(i, j) == p.hi[i];
      }
      CHECK(on_face);
    }
  }
}

TEST_CASE("invalid grid counts report the nearest valid ones") {
  const PdeProblem ac = make_problem(ProblemName::allen_cahn_2d);
  try {
    make_collocation(ac, CollocationSpec{1000, 800, -1});
    FAIL("expected an error for a non-square interior count");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("1024") != std::string::npos);
  }
  CHECK_THROWS_AS(make_collocation(ac, CollocationSpec{1024, 799, -1}), Error);

  const PdeProblem helm = make_problem(ProblemName::helmholtz_3d);
  try {
    make_collocation(helm, CollocationSpec{7999, 6144, -1});
    FAIL("expected an error for a non-cubic interior count");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("8000") != std::string::npos);
  }
}

TEST_CASE("problem names parse with a helpful error") {
  CHECK(make_problem("allen_cahn_2d").name == ProblemName::allen_cahn_2d);
  try {
    make_problem("allen_cahn");
    FAIL("expected an unknown-name error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("poisson_1d") != std::string::npos);
    CHECK(std::string(e.what()).find("helmholtz_3d") != std::string::npos);
  }
}

TEST_CASE("points outside the domain are rejected") {
  const PdeProblem p = make_problem(ProblemName::poisson_1d);
  CHECK_THROWS_AS(exact_solution(p, Vec::Constant(1, 1.5)), Error);
  CHECK_THROWS_AS(forcing(p, Vec::Constant(1, -0.2)), Error);
}

TEST_CASE("non-finite evaluator output is a structured error") {
  const PdeProblem p = make_problem(ProblemName::poisson_1d);
  auto bad_eval = [](const Vec& x) {
    DualTriple t;
    t.value = std::numeric_limits<double>::quiet_NaN();
    t.grad = Vec::Zero(x.size());
    t.hess_diag = Vec::Zero(x.size());
    return t;
  };
  CHECK_THROWS_AS(residual(p, bad_eval, Vec::Constant(1, 0.5)), Error);
}
