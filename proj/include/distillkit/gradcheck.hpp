#pragma once

#include "distillkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <type_traits>

namespace dk {

/// Largest relative disagreement between reverse-mode and central-difference
/// gradients of a scalar function.
///
/// `build` receives a fresh graph and must construct f from the input tensors
/// (via Graph::param). Per element the error is |a - n| / max(|a|, |n|, 1e-3),
/// so near-zero gradients are compared absolutely at the 1e-3 scale.
template <typename Build>
double grad_check(Build&& build, std::span<Tensor<double>* const> inputs, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
  for (auto* t : inputs) {
    if (!t->requires_grad()) throw std::invalid_argument("grad_check: every input must require grad");
    t->zero_grad();
  }
  {
    Graph<double> g;
    Var<double> out = build(g);
    if (out.value().size() != 1) throw std::invalid_argument("grad_check: function output is not a scalar");
    g.backward(out);
  }
  auto evaluate = [&build]() {
    Graph<double> g(false);
    return build(g).value()(0, 0);
  };

  double worst = 0.0;
  for (auto* t : inputs) {
    Matrix<double> analytic = t->has_grad() ? t->grad() : Matrix<double>::Zero(t->rows(), t->cols());
    auto& values = t->value();
    for (Index i = 0; i < values.size(); ++i) {
      double& x = values.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate();
      x = saved - eps;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace dk
