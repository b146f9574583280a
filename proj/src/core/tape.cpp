#include "core/tape.hpp"

#include <cmath>
#include <string>

#include "core/errors.hpp"
#include "core/network.hpp"

namespace cpinn {

Tape::Var Tape::record(double value, const char* op, int a, double pa, int b, double pb) {
  if (!std::isfinite(value)) {
    fail(ErrorCode::numeric_error,
         std::string("non-finite value produced by '") + op + "' on the loss tape");
  }
  Node n;
  n.a = a;
  n.pa = pa;
  n.b = b;
  n.pb = pb;
  nodes_.push_back(n);
  return Var{static_cast<int>(nodes_.size()) - 1, value};
}

Tape::Var Tape::input(double value) { return record(value, "input", -1, 0.0); }

Tape::Var Tape::add(Var a, Var b) {
  return record(a.val + b.val, "add", a.idx, 1.0, b.idx, 1.0);
}

Tape::Var Tape::sub(Var a, Var b) {
  return record(a.val - b.val, "sub", a.idx, 1.0, b.idx, -1.0);
}

Tape::Var Tape::mul(Var a, Var b) {
  return record(a.val * b.val, "mul", a.idx, b.val, b.idx, a.val);
}

Tape::Var Tape::div(Var a, Var b) {
  if (b.val == 0.0) fail(ErrorCode::numeric_error, "division by zero on the loss tape");
  const double v = a.val / b.val;
  return record(v, "div", a.idx, 1.0 / b.val, b.idx, -v / b.val);
}

Tape::Var Tape::neg(Var a) { return record(-a.val, "neg", a.idx, -1.0); }

Tape::Var Tape::cmul(double c, Var a) { return record(c * a.val, "cmul", a.idx, c); }

Tape::Var Tape::cadd(double c, Var a) { return record(c + a.val, "cadd", a.idx, 1.0); }

Tape::Var Tape::square(Var a) {
  return record(a.val * a.val, "square", a.idx, 2.0 * a.val);
}

Tape::Var Tape::tanh_(Var a) {
  const double t = std::tanh(a.val);
  return record(t, "tanh", a.idx, 1.0 - t * t);
}

Tape::Var Tape::exp_(Var a) {
  const double e = std::exp(a.val);
  return record(e, "exp", a.idx, e);
}

Tape::Var Tape::log_(Var a) {
  if (a.val <= 0.0) {
    fail(ErrorCode::numeric_error,
         "log of a non-positive value (" + std::to_string(a.val) + ") on the loss tape");
  }
  return record(std::log(a.val), "log", a.idx, 1.0 / a.val);
}

Tape::Var Tape::softplus(Var a) {
  // log(1 + e^x), with the overflow-safe branch for large x
  const double x = a.val;
  const double v = x > 30.0 ? x : std::log1p(std::exp(x));
  const double s = 1.0 / (1.0 + std::exp(-x));
  return record(v, "softplus", a.idx, s);
}

Tape::Var Tape::sum(std::span<const Var> xs) {
  if (xs.empty()) return constant(0.0);
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

Tape::Var Tape::mean(std::span<const Var> xs) {
  require(!xs.empty(), ErrorCode::invalid_argument, "mean over an empty set on the loss tape");
  return cmul(1.0 / static_cast<double>(xs.size()), sum(xs));
}

Tape::Var Tape::dot_plus(std::span<const Var> w, std::span<const Var> x, Var b) {
  require(w.size() == x.size(), ErrorCode::dimension_mismatch,
          "affine: weight and input sizes differ");
  Var acc = b;
  for (std::size_t i = 0; i < w.size(); ++i) acc = add(acc, mul(w[i], x[i]));
  return acc;
}

Vec Tape::gradient(Var output, std::span<const Var> wrt) const {
  require(output.idx >= 0 && output.idx < static_cast<int>(nodes_.size()),
          ErrorCode::invalid_argument, "gradient target is not a tape variable");
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[static_cast<std::size_t>(output.idx)] = 1.0;
  for (int i = output.idx; i >= 0; --i) {
    const double a = adj[static_cast<std::size_t>(i)];
    if (a == 0.0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.a >= 0) adj[static_cast<std::size_t>(n.a)] += a * n.pa;
    if (n.b >= 0) adj[static_cast<std::size_t>(n.b)] += a * n.pb;
  }
  Vec g(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    g[static_cast<Eigen::Index>(i)] =
        wrt[i].idx >= 0 ? adj[static_cast<std::size_t>(wrt[i].idx)] : 0.0;
  }
  return g;
}

Tape::Var tape_mlp_forward(Tape& tape, std::span<const Tape::Var> flat,
                           const std::vector<int>& dims, const Vec& x) {
  require(dims.size() >= 2, ErrorCode::invalid_argument, "mlp needs >= 2 layers");
  require(x.size() == dims.front(), ErrorCode::dimension_mismatch,
          "tape mlp input dimension mismatch");
  std::vector<Tape::Var> a(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) a[static_cast<std::size_t>(i)] = tape.constant(x[i]);

  std::size_t k = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    std::vector<Tape::Var> z(static_cast<std::size_t>(fan_out));
    const std::span<const Tape::Var> w_block = flat.subspan(k, static_cast<std::size_t>(fan_in) * fan_out);
    const std::span<const Tape::Var> b_block =
        flat.subspan(k + static_cast<std::size_t>(fan_in) * fan_out, static_cast<std::size_t>(fan_out));
    for (int r = 0; r < fan_out; ++r) {
      const auto row = w_block.subspan(static_cast<std::size_t>(r) * fan_in,
                                       static_cast<std::size_t>(fan_in));
      z[static_cast<std::size_t>(r)] = tape.dot_plus(row, a, b_block[static_cast<std::size_t>(r)]);
    }
    if (l + 2 < dims.size()) {
      a.resize(z.size());
      for (std::size_t r = 0; r < z.size(); ++r) a[r] = tape.tanh_(z[r]);
    } else {
      a = std::move(z);
    }
    k += static_cast<std::size_t>(fan_in) * fan_out + static_cast<std::size_t>(fan_out);
  }
  require(a.size() == 1, ErrorCode::invalid_argument, "tape mlp expects a scalar output");
  return a[0];
}

Vec loss_grad_params(const TapeLoss& loss, const MlpParameters& params) {
  Tape tape;
  const Vec flat = params.flatten();
  std::vector<Tape::Var> vars(static_cast<std::size_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    vars[static_cast<std::size_t>(i)] = tape.input(flat[i]);
  }
  const Tape::Var out = loss(tape, vars);
  return tape.gradient(out, vars);
}

}  // namespace cpinn
