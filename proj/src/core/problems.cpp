#include "core/problems.hpp"

#include <cmath>
#include <numbers>

#include "core/errors.hpp"

namespace cpinn {

namespace {

constexpr double kPi = std::numbers::pi;

void check_in_closure(const PdeProblem& p, const Vec& x) {
  require(x.size() == p.dim, ErrorCode::dimension_mismatch,
          "point has dimension " + std::to_string(x.size()) + ", problem '" +
              problem_name_string(p.name) + "' expects " + std::to_string(p.dim));
  for (int i = 0; i < p.dim; ++i) {
    if (x[i] < p.lo[i] - 1e-12 || x[i] > p.hi[i] + 1e-12) {
      fail(ErrorCode::invalid_argument,
           "point outside the domain of '" + problem_name_string(p.name) + "' on axis " +
               std::to_string(i));
    }
  }
}

// Damped oscillator closed form u(t) = e^{at} (C cos(wd t) + D sin(wd t)).
struct OscillatorForm {
  double a, wd, C, D;
};

OscillatorForm oscillator_form(const PdeProblem& p) {
  OscillatorForm f;
  f.a = -p.zeta * p.omega;
  f.wd = p.omega * std::sqrt(1.0 - p.zeta * p.zeta);
  f.C = p.u0;
  f.D = (p.v0 + p.zeta * p.omega * p.u0) / f.wd;
  return f;
}

int nearest_square(int n) {
  const int r = static_cast<int>(std::llround(std::sqrt(static_cast<double>(n))));
  return r * r;
}

int nearest_cube(int n) {
  const int r = static_cast<int>(std::llround(std::cbrt(static_cast<double>(n))));
  return r * r * r;
}

}  // namespace

std::string problem_name_string(ProblemName name) {
  switch (name) {
    case ProblemName::poisson_1d: return "poisson_1d";
    case ProblemName::oscillator_1d: return "oscillator_1d";
    case ProblemName::allen_cahn_2d: return "allen_cahn_2d";
    case ProblemName::helmholtz_3d: return "helmholtz_3d";
  }
  return "unknown";
}

std::vector<std::string> valid_problem_names() {
  return {"poisson_1d", "oscillator_1d", "allen_cahn_2d", "helmholtz_3d"};
}

ProblemName parse_problem_name(const std::string& name) {
  for (const auto& candidate :
       {ProblemName::poisson_1d, ProblemName::oscillator_1d, ProblemName::allen_cahn_2d,
        ProblemName::helmholtz_3d}) {
    if (problem_name_string(candidate) == name) return candidate;
  }
  std::string valid;
  for (const auto& v : valid_problem_names()) valid += (valid.empty() ? "" : ", ") + v;
  fail(ErrorCode::invalid_argument,
       "unknown problem '" + name + "'; valid options: " + valid);
}

PdeProblem make_problem(ProblemName name) {
  PdeProblem p;
  p.name = name;
  switch (name) {
    case ProblemName::poisson_1d:
      p.dim = 1;
      p.lo = Vec::Constant(1, 0.0);
      p.hi = Vec::Constant(1, 1.0);
      break;
    case ProblemName::oscillator_1d:
      p.dim = 1;
      p.lo = Vec::Constant(1, 0.0);
      p.hi = Vec::Constant(1, 5.0);
      p.omega = 2.0 * kPi;
      p.zeta = 0.05;
      p.u0 = 1.0;
      p.v0 = 0.0;
      break;
    case ProblemName::allen_cahn_2d:
      p.dim = 2;
      p.lo = Vec::Constant(2, -1.0);
      p.hi = Vec::Constant(2, 1.0);
      p.lambda = 0.05;
      break;
    case ProblemName::helmholtz_3d:
      p.dim = 3;
      p.lo = Vec::Constant(3, 0.0);
      p.hi = Vec::Constant(3, 1.0);
      p.wavenumber = kPi;
      break;
  }
  return p;
}

PdeProblem make_problem(const std::string& name) {
  return make_problem(parse_problem_name(name));
}

double exact_solution(const PdeProblem& p, const Vec& x) {
  check_in_closure(p, x);
  switch (p.name) {
    case ProblemName::poisson_1d:
      return std::sin(kPi * x[0]);
    case ProblemName::oscillator_1d: {
      const auto f = oscillator_form(p);
      const double t = x[0];
      return std::exp(f.a * t) * (f.C * std::cos(f.wd * t) + f.D * std::sin(f.wd * t));
    }
    case ProblemName::allen_cahn_2d:
      return std::sin(kPi * x[0]) * std::sin(kPi * x[1]);
    case ProblemName::helmholtz_3d:
      return std::sin(kPi * x[0]) * std::sin(kPi * x[1]) * std::sin(kPi * x[2]);
  }
  return 0.0;
}

DualTriple exact_solution_derivs(const PdeProblem& p, const Vec& x) {
  check_in_closure(p, x);
  DualTriple t;
  t.grad = Vec::Zero(p.dim);
  t.hess_diag = Vec::Zero(p.dim);
  switch (p.name) {
    case ProblemName::poisson_1d: {
      t.value = std::sin(kPi * x[0]);
      t.grad[0] = kPi * std::cos(kPi * x[0]);
      t.hess_diag[0] = -kPi * kPi * t.value;
      break;
    }
    case ProblemName::oscillator_1d: {
      const auto f = oscillator_form(p);
      const double tt = x[0];
      const double e = std::exp(f.a * tt);
      const double c = std::cos(f.wd * tt), s = std::sin(f.wd * tt);
      t.value = e * (f.C * c + f.D * s);
      t.grad[0] = e * ((f.a * f.C + f.D * f.wd) * c + (f.a * f.D - f.C * f.wd) * s);
      t.hess_diag[0] =
          e * ((f.a * f.a * f.C + 2.0 * f.a * f.D * f.wd - f.C * f.wd * f.wd) * c +
               (f.a * f.a * f.D - 2.0 * f.a * f.C * f.wd - f.D * f.wd * f.wd) * s);
      break;
    }
    case ProblemName::allen_cahn_2d: {
      const double sx = std::sin(kPi * x[0]), cx = std::cos(kPi * x[0]);
      const double sy = std::sin(kPi * x[1]), cy = std::cos(kPi * x[1]);
      t.value = sx * sy;
      t.grad[0] = kPi * cx * sy;
      t.grad[1] = kPi * sx * cy;
      t.hess_diag[0] = -kPi * kPi * t.value;
      t.hess_diag[1] = -kPi * kPi * t.value;
      break;
    }
    case ProblemName::helmholtz_3d: {
      const double sx = std::sin(kPi * x[0]), cx = std::cos(kPi * x[0]);
      const double sy = std::sin(kPi * x[1]), cy = std::cos(kPi * x[1]);
      const double sz = std::sin(kPi * x[2]), cz = std::cos(kPi * x[2]);
      t.value = sx * sy * sz;
      t.grad[0] = kPi * cx * sy * sz;
      t.grad[1] = kPi * sx * cy * sz;
      t.grad[2] = kPi * sx * sy * cz;
      t.hess_diag[0] = -kPi * kPi * t.value;
      t.hess_diag[1] = -kPi * kPi * t.value;
      t.hess_diag[2] = -kPi * kPi * t.value;
      break;
    }
  }
  return t;
}

double forcing(const PdeProblem& p, const Vec& x) {
  check_in_closure(p, x);
  switch (p.name) {
    case ProblemName::poisson_1d:
      return -kPi * kPi * std::sin(kPi * x[0]);
    case ProblemName::oscillator_1d:
      return 0.0;
    case ProblemName::allen_cahn_2d: {
      // f = lambda * Delta(u*) + u* (u*^2 - 1) with Delta(u*) = -2 pi^2 u*
      const double u = std::sin(kPi * x[0]) * std::sin(kPi * x[1]);
      return -2.0 * p.lambda * kPi * kPi * u + u * (u * u - 1.0);
    }
    case ProblemName::helmholtz_3d: {
      const double u = std::sin(kPi * x[0]) * std::sin(kPi * x[1]) * std::sin(kPi * x[2]);
      return -2.0 * kPi * kPi * u;
    }
  }
  return 0.0;
}

double boundary_value(const PdeProblem& p, const Vec& x) {
  switch (p.name) {
    case ProblemName::poisson_1d:
    case ProblemName::helmholtz_3d:
      return 0.0;
    case ProblemName::allen_cahn_2d:
      return exact_solution(p, x);  // Dirichlet trace of the exact solution
    case ProblemName::oscillator_1d:
      fail(ErrorCode::invalid_argument,
           "the oscillator has initial conditions, not spatial boundary data");
  }
  return 0.0;
}

double residual_from_triple(const PdeProblem& p, const DualTriple& t, const Vec& x) {
  require(t.grad.size() == p.dim && t.hess_diag.size() == p.dim,
          ErrorCode::dimension_mismatch, "evaluator triple dimension mismatch");
  if (!std::isfinite(t.value) || !t.grad.allFinite() || !t.hess_diag.allFinite()) {
    fail(ErrorCode::numeric_error, "non-finite evaluator output in residual at '" +
                                       problem_name_string(p.name) + "'");
  }
  const double f = forcing(p, x);
  switch (p.name) {
    case ProblemName::poisson_1d:
      return t.hess_diag[0] - f;
    case ProblemName::oscillator_1d:
      return t.hess_diag[0] + 2.0 * p.zeta * p.omega * t.grad[0] +
             p.omega * p.omega * t.value - f;
    case ProblemName::allen_cahn_2d:
      return p.lambda * (t.hess_diag[0] + t.hess_diag[1]) +
             t.value * (t.value * t.value - 1.0) - f;
    case ProblemName::helmholtz_3d:
      return t.hess_diag.sum() + p.wavenumber * p.wavenumber * t.value - f;
  }
  return 0.0;
}

double residual(const PdeProblem& p,
                const std::function<DualTriple(const Vec&)>& evaluator, const Vec& x) {
  return residual_from_triple(p, evaluator(x), x);
}

CollocationSet make_collocation(const PdeProblem& p, const CollocationSpec& spec) {
  CollocationSet set;
  int n_interior = spec.interior;
  int n_boundary = spec.boundary;
  int n_initial = spec.initial;

  switch (p.name) {
    case ProblemName::poisson_1d: {
      if (n_interior <= 0) n_interior = 200;
      if (n_boundary < 0) n_boundary = 2;
      require(n_boundary == 2, ErrorCode::invalid_argument,
              "poisson_1d boundary consists of exactly the 2 endpoints; nearest valid count is 2");
      set.interior.resize(1, n_interior);
      for (int j = 0; j < n_interior; ++j) {
        set.interior(0, j) = (j + 1) / static_cast<double>(n_interior + 1);
      }
      set.boundary.resize(1, 2);
      set.boundary(0, 0) = p.lo[0];
      set.boundary(0, 1) = p.hi[0];
      break;
    }
    case ProblemName::oscillator_1d: {
      if (n_interior <= 0) n_interior = 200;
      if (n_initial < 0) n_initial = 1;
      require(n_initial == 1, ErrorCode::invalid_argument,
              "oscillator_1d has a single initial point t=0; nearest valid count is 1");
      // uniform grid on (0, 5]
      set.interior.resize(1, n_interior);
      for (int j = 0; j < n_interior; ++j) {
        set.interior(0, j) = p.hi[0] * (j + 1) / static_cast<double>(n_interior);
      }
      set.initial = Mat::Zero(1, 1);
      break;
    }
    case ProblemName::allen_cahn_2d: {
      if (n_interior <= 0) n_interior = 1024;
      if (n_boundary < 0) n_boundary = 800;
      const int side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(n_interior))));
      require(side * side == n_interior, ErrorCode::invalid_argument,
              "allen_cahn_2d interior must be a square grid count; nearest valid count is " +
                  std::to_string(nearest_square(n_interior)));
      require(n_boundary % 4 == 0, ErrorCode::invalid_argument,
              "allen_cahn_2d boundary count must split evenly over 4 edges; nearest valid count is " +
                  std::to_string((n_boundary / 4) * 4));
      set.interior.resize(2, n_interior);
      int c = 0;
      for (int i = 0; i < side; ++i) {
        const double xi = p.lo[0] + (p.hi[0] - p.lo[0]) * (i + 1) / (side + 1.0);
        for (int j = 0; j < side; ++j) {
          set.interior(0, c) = xi;
          set.interior(1, c) = p.lo[1] + (p.hi[1] - p.lo[1]) * (j + 1) / (side + 1.0);
          ++c;
        }
      }
      const int per_edge = n_boundary / 4;
      set.boundary.resize(2, n_boundary);
      c = 0;
      for (int e = 0; e < 4; ++e) {
        for (int j = 0; j < per_edge; ++j) {
          const double s = p.lo[0] + (p.hi[0] - p.lo[0]) * (j + 0.5) / per_edge;
          double x = 0.0, y = 0.0;
          switch (e) {
            case 0: x = s; y = p.lo[1]; break;
            case 1: x = s; y = p.hi[1]; break;
            case 2: x = p.lo[0]; y = s; break;
            case 3: x = p.hi[0]; y = s; break;
          }
          set.boundary(0, c) = x;
          set.boundary(1, c) = y;
          ++c;
        }
      }
      break;
    }
    case ProblemName::helmholtz_3d: {
      if (n_interior <= 0) n_interior = 8000;
      if (n_boundary < 0) n_boundary = 6144;
      const int side = static_cast<int>(std::llround(std::cbrt(static_cast<double>(n_interior))));
      require(side * side * side == n_interior, ErrorCode::invalid_argument,
              "helmholtz_3d interior must be a cubic grid count; nearest valid count is " +
                  std::to_string(nearest_cube(n_interior)));
      require(n_boundary % 6 == 0, ErrorCode::invalid_argument,
              "helmholtz_3d boundary count must split evenly over 6 faces; nearest valid count is " +
                  std::to_string((n_boundary / 6) * 6));
      const int per_face = n_boundary / 6;
      const int fside = static_cast<int>(std::llround(std::sqrt(static_cast<double>(per_face))));
      require(fside * fside == per_face, ErrorCode::invalid_argument,
              "helmholtz_3d per-face boundary count must be a square; nearest valid count is " +
                  std::to_string(6 * nearest_square(per_face)));
      set.interior.resize(3, n_interior);
      int c = 0;
      for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
          for (int k = 0; k < side; ++k) {
            set.interior(0, c) = (i + 1) / (side + 1.0);
            set.interior(1, c) = (j + 1) / (side + 1.0);
            set.interior(2, c) = (k + 1) / (side + 1.0);
            ++c;
          }
        }
      }
      set.boundary.resize(3, n_boundary);
      c = 0;
      for (int axis = 0; axis < 3; ++axis) {
        for (double face : {0.0, 1.0}) {
          for (int i = 0; i < fside; ++i) {
            for (int j = 0; j < fside; ++j) {
              Vec pt(3);
              pt[axis] = face;
              pt[(axis + 1) % 3] = (i + 0.5) / fside;
              pt[(axis + 2) % 3] = (j + 0.5) / fside;
              set.boundary.col(c++) = pt;
            }
          }
        }
      }
      break;
    }
  }
  return set;
}

}  // namespace cpinn
