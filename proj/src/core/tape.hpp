#pragma once

#include <functional>
#include <span>
#include <vector>

#include "core/linalg.hpp"

namespace cpinn {

struct MlpParameters;

// Reverse-mode tape over scalars. Losses are built from the primitive set
// below (affine pieces, tanh, square, mean, constant multiply, softplus,
// log, exp); each recorded node stores its local partials so the backward
// sweep is op-agnostic. One tape per gradient evaluation.
class Tape {
 public:
  struct Var {
    int idx = -1;
    double val = 0.0;
  };

  Var input(double value);
  Var constant(double value) { return Var{-1, value}; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var cmul(double c, Var a);
  Var cadd(double c, Var a);
  Var square(Var a);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var log_(Var a);
  Var softplus(Var a);
  Var mean(std::span<const Var> xs);
  Var sum(std::span<const Var> xs);
  Var dot_plus(std::span<const Var> w, std::span<const Var> x, Var b);  // affine

  std::size_t size() const { return nodes_.size(); }

  // d(output)/d(each wrt var), by one reverse sweep.
  Vec gradient(Var output, std::span<const Var> wrt) const;

 private:
  struct Node {
    int a = -1, b = -1;     // parent indices (-1: none)
    double pa = 0.0, pb = 0.0;  // partials wrt parents
  };

  Var record(double value, const char* op, int a, double pa, int b = -1, double pb = 0.0);

  std::vector<Node> nodes_;
};

// Builds a network forward pass out of tape primitives; `flat` must follow
// the canonical parameter layout for `dims`.
Tape::Var tape_mlp_forward(Tape& tape, std::span<const Tape::Var> flat,
                           const std::vector<int>& dims, const Vec& x);

// Gradient of a tape-built scalar loss with respect to all parameters, in
// canonical flat order.
using TapeLoss = std::function<Tape::Var(Tape&, std::span<const Tape::Var>)>;
Vec loss_grad_params(const TapeLoss& loss, const MlpParameters& params);

}  // namespace cpinn
