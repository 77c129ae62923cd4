#pragma once

#include "distillkit/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dk {

/// Per-parameter Adam moments. Buffers are index-aligned with the parameter
/// list the state was created for.
template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  std::int64_t step_count = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  Scalar lr = Scalar(3e-4);
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(std::span<Tensor<Scalar>* const> params, Scalar lr) {
  AdamState<Scalar> state;
  state.lr = lr;
  for (const auto* p : params) {
    state.first_moment.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    state.second_moment.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
  }
  return state;
}

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// A parameter with an empty grad buffer is treated as having zero gradient.
/// Validation happens before any parameter is touched.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>* const> params, AdamState<Scalar>& state) {
  if (!(state.lr > Scalar(0))) throw std::invalid_argument("adam: learning rate must be positive");
  if (params.size() != state.first_moment.size() || params.size() != state.second_moment.size()) {
    throw std::invalid_argument("adam: parameter count does not match optimizer state");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<Scalar>& p = *params[i];
    if (state.first_moment[i].rows() != p.rows() || state.first_moment[i].cols() != p.cols() ||
        state.second_moment[i].rows() != p.rows() || state.second_moment[i].cols() != p.cols()) {
      throw std::invalid_argument("adam: moment buffer shape mismatch");
    }
    if (p.has_grad()) {
      if (p.grad().rows() != p.rows() || p.grad().cols() != p.cols()) {
        throw std::invalid_argument("adam: gradient shape mismatch");
      }
      if (!p.grad().allFinite()) throw std::domain_error("adam: non-finite gradient");
    }
  }

  ++state.step_count;
  const auto t = static_cast<Scalar>(state.step_count);
  const Scalar bc1 = Scalar(1) - std::pow(state.beta1, t);
  const Scalar bc2 = Scalar(1) - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Scalar>& p = *params[i];
    if (!p.has_grad()) {
      state.first_moment[i] *= state.beta1;
      state.second_moment[i] *= state.beta2;
    } else {
      const auto& g = p.grad();
      state.first_moment[i] = state.beta1 * state.first_moment[i] + (Scalar(1) - state.beta1) * g;
      state.second_moment[i] =
          state.beta2 * state.second_moment[i] + (Scalar(1) - state.beta2) * g.cwiseAbs2();
    }
    auto m_hat = state.first_moment[i].array() / bc1;
    auto v_hat = state.second_moment[i].array() / bc2;
    p.value().array() -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
  }
}

}  // namespace dk
