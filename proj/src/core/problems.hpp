#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/diff_engine.hpp"
#include "core/linalg.hpp"

namespace cpinn {

enum class ProblemName { poisson_1d, oscillator_1d, allen_cahn_2d, helmholtz_3d };

std::string problem_name_string(ProblemName name);
ProblemName parse_problem_name(const std::string& name);
std::vector<std::string> valid_problem_names();

// One benchmark boundary-value problem: domain, operator constants,
// boundary/initial data and the closed-form solution.
struct PdeProblem {
  ProblemName name = ProblemName::poisson_1d;
  int dim = 1;
  Vec lo, hi;  // per-axis bounds

  double lambda = 0.05;     // Allen-Cahn interface constant
  double wavenumber = 0.0;  // Helmholtz k
  double omega = 0.0;       // oscillator angular frequency
  double zeta = 0.0;        // oscillator damping ratio
  double u0 = 1.0, v0 = 0.0;  // oscillator initial value and velocity

  bool has_initial_condition() const { return name == ProblemName::oscillator_1d; }
  bool has_boundary_points() const { return name != ProblemName::oscillator_1d; }
};

PdeProblem make_problem(ProblemName name);
PdeProblem make_problem(const std::string& name);

double exact_solution(const PdeProblem& problem, const Vec& x);
// Closed-form value/gradient/diagonal-Hessian of the exact solution.
DualTriple exact_solution_derivs(const PdeProblem& problem, const Vec& x);
double forcing(const PdeProblem& problem, const Vec& x);
double boundary_value(const PdeProblem& problem, const Vec& x);

// L[u](x) - f(x) from an evaluator supplying (value, grad, hess_diag) at x.
double residual(const PdeProblem& problem,
                const std::function<DualTriple(const Vec&)>& evaluator, const Vec& x);
double residual_from_triple(const PdeProblem& problem, const DualTriple& t, const Vec& x);

struct CollocationSpec {
  int interior = 0;   // 0: problem default
  int boundary = -1;  // -1: problem default
  int initial = -1;   // -1: problem default
};

struct CollocationSet {
  Mat interior;  // dim x n_interior
  Mat boundary;  // dim x n_boundary (empty for the oscillator)
  Mat initial;   // dim x n_initial (oscillator only)
};

CollocationSet make_collocation(const PdeProblem& problem, const CollocationSpec& spec = {});

}  // namespace cpinn
