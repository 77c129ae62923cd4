#pragma once

#include "distillkit/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dk {

// ---------------------------------------------------------------------------
// Plain vector kernels
// ---------------------------------------------------------------------------

/// Numerically stable softmax of a row or column vector.
template <typename Derived>
RowVector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  if (!v.allFinite()) throw std::invalid_argument("softmax input must be finite");
  RowVector<Scalar> out = v.derived().reshaped().transpose();
  out.array() -= out.maxCoeff();
  out = out.array().exp();
  out /= out.sum();
  return out;
}

/// gain * (v - mean) / sqrt(var + eps) + bias, with population variance.
template <typename DV, typename DG, typename DB>
RowVector<typename DV::Scalar> layer_norm(const Eigen::MatrixBase<DV>& v, const Eigen::MatrixBase<DG>& gain,
                                          const Eigen::MatrixBase<DB>& bias, typename DV::Scalar eps) {
  using Scalar = typename DV::Scalar;
  if (v.size() == 0 || v.size() != gain.size() || v.size() != bias.size()) {
    throw std::invalid_argument("layer_norm length mismatch");
  }
  if (eps < Scalar(0)) throw std::invalid_argument("layer_norm eps must be non-negative");
  RowVector<Scalar> x = v.derived().reshaped().transpose();
  const Scalar mean = x.mean();
  x.array() -= mean;
  const Scalar var = x.squaredNorm() / static_cast<Scalar>(x.size());
  const Scalar denom = std::sqrt(var + eps);
  // Zero variance with eps == 0 leaves a zero numerator; define the result as bias.
  if (denom > Scalar(0)) x /= denom;
  return (x.array() * gain.derived().reshaped().transpose().array() +
          bias.derived().reshaped().transpose().array())
      .matrix();
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out = logits;
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return out;
}

inline void require_same_shape(Index r1, Index c1, Index r2, Index c2, const char* op) {
  if (r1 != r2 || c1 != c2) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable ops on graph nodes
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  auto& g = a.graph();
  const int ia = a.id(), ib = b.id();
  return g.make(a.value() * b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    if (g.needs_grad(ia)) g.accumulate(ia, grad * g.value(ib).transpose());
    if (g.needs_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * grad);
  });
}

/// a * b^T.
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  auto& g = a.graph();
  const int ia = a.id(), ib = b.id();
  return g.make(a.value() * b.value().transpose(), {a, b}, [ia, ib](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    if (g.needs_grad(ia)) g.accumulate(ia, grad * g.value(ib));
    if (g.needs_grad(ib)) g.accumulate(ib, grad.transpose() * g.value(ia));
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "add");
  const int ia = a.id(), ib = b.id();
  return a.graph().make(a.value() + b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    g.accumulate(ia, grad);
    g.accumulate(ib, grad);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "sub");
  const int ia = a.id(), ib = b.id();
  return a.graph().make(a.value() - b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    g.accumulate(ia, grad);
    g.accumulate(ib, -grad);
  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  const int ia = a.id();
  return a.graph().make(s * a.value(), {a}, [ia, s](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    g.accumulate(ia, s * grad);
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> hadamard(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "hadamard");
  const int ia = a.id(), ib = b.id();
  return a.graph().make(a.value().cwiseProduct(b.value()), {a, b},
                        [ia, ib](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
                          if (g.needs_grad(ia)) g.accumulate(ia, grad.cwiseProduct(g.value(ib)));
                          if (g.needs_grad(ib)) g.accumulate(ib, grad.cwiseProduct(g.value(ia)));
                        });
}

/// x + broadcast of the 1 x cols row `b` onto every row.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw std::invalid_argument("add_row: bias shape mismatch");
  const int ix = x.id(), ib = b.id();
  Matrix<Scalar> out = x.value();
  out.rowwise() += b.value().row(0);
  return x.graph().make(std::move(out), {x, b}, [ix, ib](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    g.accumulate(ix, grad);
    if (g.needs_grad(ib)) g.accumulate(ib, grad.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.graph().make(Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a},
                        [ia, r, c](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
                          g.accumulate(ia, Matrix<Scalar>::Constant(r, c, grad(0, 0)));
                        });
}

/// GELU, tanh approximation.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  const Scalar k = std::sqrt(Scalar(2) / Scalar(M_PI));
  const Scalar c = Scalar(0.044715);
  const auto& x = a.value();
  Matrix<Scalar> t = (k * (x.array() + c * x.array().cube())).tanh().matrix();
  Matrix<Scalar> out = (Scalar(0.5) * x.array() * (Scalar(1) + t.array())).matrix();
  const int ia = a.id();
  return a.graph().make(std::move(out), {a}, [ia, k, c, t = std::move(t)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    const auto& x = g.value(ia).array();
    auto sech2 = Scalar(1) - t.array().square();
    auto d = Scalar(0.5) * (Scalar(1) + t.array()) +
             Scalar(0.5) * x * sech2 * k * (Scalar(1) + Scalar(3) * c * x.square());
    g.accumulate(ia, (grad.array() * d).matrix());
  });
}

/// Row-wise layer normalization with learned gain and bias rows.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias, Scalar eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw std::invalid_argument("layer_norm length mismatch");
  }
  if (!(eps > Scalar(0))) throw std::invalid_argument("layer_norm eps must be positive");
  Matrix<Scalar> xhat = x.value();
  RowVector<Scalar> inv_std(xhat.rows());
  for (Index r = 0; r < xhat.rows(); ++r) {
    auto row = xhat.row(r);
    row.array() -= row.mean();
    const Scalar var = row.squaredNorm() / static_cast<Scalar>(n);
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    row *= inv_std(r);
  }
  Matrix<Scalar> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), ig = gain.id(), ibias = bias.id();
  return x.graph().make(
      std::move(out), {x, gain, bias},
      [ix, ig, ibias, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<Scalar>& g,
                                                                              const Matrix<Scalar>& grad) {
        if (g.needs_grad(ig)) g.accumulate(ig, grad.cwiseProduct(xhat).colwise().sum());
        if (g.needs_grad(ibias)) g.accumulate(ibias, grad.colwise().sum());
        if (!g.needs_grad(ix)) return;
        Matrix<Scalar> dxhat = grad;
        dxhat.array().rowwise() *= g.value(ig).row(0).array();
        Matrix<Scalar> dx(dxhat.rows(), n);
        for (Index r = 0; r < dxhat.rows(); ++r) {
          const Scalar mean_d = dxhat.row(r).mean();
          const Scalar mean_dx = dxhat.row(r).dot(xhat.row(r)) / static_cast<Scalar>(n);
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
        }
        g.accumulate(ix, dx);
      });
}

/// Gathers rows of `table` at `ids`.
template <typename Scalar>
Var<Scalar> embedding(const Var<Scalar>& table, std::vector<int> ids) {
  const auto& t = table.value();
  Matrix<Scalar> out(static_cast<Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) throw std::out_of_range("embedding: id out of range");
    out.row(static_cast<Index>(i)) = t.row(ids[i]);
  }
  const int it = table.id();
  return table.graph().make(std::move(out), {table}, [it, ids = std::move(ids)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    g.accumulate_rows(it, ids, grad);
  });
}

/// Row-wise softmax.
template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  Matrix<Scalar> p = detail::log_softmax_rows(a.value()).array().exp().matrix();
  const int ia = a.id();
  Matrix<Scalar> out = p;
  return a.graph().make(std::move(out), {a}, [ia, p = std::move(p)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
    Matrix<Scalar> dot = grad.cwiseProduct(p).rowwise().sum();
    Matrix<Scalar> dx = p.cwiseProduct(grad - dot.replicate(1, grad.cols()));
    g.accumulate(ia, dx);
  });
}

/// Multi-head scaled dot-product attention over already-projected q, k, v.
///
/// q is n x d, k and v are m x d; heads split the d columns evenly. Key c is
/// visible to query i when key_mask[c] holds and, if causal, c <= i. A query
/// with no visible key attends to nothing and yields a zero row.
template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v, int n_heads, bool causal,
                      const std::vector<bool>& key_mask) {
  const Index n = q.rows(), m = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != m) throw std::invalid_argument("attention: shape mismatch");
  if (n_heads <= 0 || d % n_heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
  if (static_cast<Index>(key_mask.size()) != m) throw std::invalid_argument("attention: key mask length mismatch");
  const Index dk = d / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dk));

  std::vector<Matrix<Scalar>> probs(static_cast<std::size_t>(n_heads));
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, d);
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  for (int h = 0; h < n_heads; ++h) {
    Matrix<Scalar> s = scale * (Q.middleCols(h * dk, dk) * K.middleCols(h * dk, dk).transpose());
    Matrix<Scalar>& p = probs[static_cast<std::size_t>(h)];
    p = Matrix<Scalar>::Zero(n, m);
    for (Index i = 0; i < n; ++i) {
      Scalar best = -std::numeric_limits<Scalar>::infinity();
      for (Index c = 0; c < m; ++c) {
        if (key_mask[static_cast<std::size_t>(c)] && (!causal || c <= i)) best = std::max(best, s(i, c));
      }
      if (best == -std::numeric_limits<Scalar>::infinity()) continue;
      Scalar total = 0;
      for (Index c = 0; c < m; ++c) {
        if (key_mask[static_cast<std::size_t>(c)] && (!causal || c <= i)) {
          p(i, c) = std::exp(s(i, c) - best);
          total += p(i, c);
        }
      }
      p.row(i) /= total;
    }
    out.middleCols(h * dk, dk) = p * V.middleCols(h * dk, dk);
  }

  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph().make(
      std::move(out), {q, k, v},
      [iq, ik, iv, n_heads, dk, scale, probs = std::move(probs)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
        const auto& Q = g.value(iq);
        const auto& K = g.value(ik);
        const auto& V = g.value(iv);
        Matrix<Scalar> dQ = Matrix<Scalar>::Zero(Q.rows(), Q.cols());
        Matrix<Scalar> dK = Matrix<Scalar>::Zero(K.rows(), K.cols());
        Matrix<Scalar> dV = Matrix<Scalar>::Zero(V.rows(), V.cols());
        for (int h = 0; h < n_heads; ++h) {
          const Matrix<Scalar>& p = probs[static_cast<std::size_t>(h)];
          const auto dO = grad.middleCols(h * dk, dk);
          dV.middleCols(h * dk, dk) = p.transpose() * dO;
          Matrix<Scalar> dP = dO * V.middleCols(h * dk, dk).transpose();
          Matrix<Scalar> row_dot = dP.cwiseProduct(p).rowwise().sum();
          Matrix<Scalar> dS = p.cwiseProduct(dP - row_dot.replicate(1, dP.cols()));
          dQ.middleCols(h * dk, dk) = scale * (dS * K.middleCols(h * dk, dk));
          dK.middleCols(h * dk, dk) = scale * (dS.transpose() * Q.middleCols(h * dk, dk));
        }
        g.accumulate(iq, dQ);
        g.accumulate(ik, dK);
        g.accumulate(iv, dV);
      });
}

/// Summed token cross-entropy: -sum_t log softmax(logits_t)[labels_t] over
/// rows whose label is not `pad_id`. Log-softmax is fused for stability.
template <typename Scalar>
Var<Scalar> cross_entropy_sum(const Var<Scalar>& logits, const std::vector<int>& labels, int pad_id) {
  const auto& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) throw std::invalid_argument("cross_entropy: length mismatch");
  Matrix<Scalar> logp = detail::log_softmax_rows(z);
  Scalar total = 0;
  for (Index t = 0; t < z.rows(); ++t) {
    const int y = labels[static_cast<std::size_t>(t)];
    if (y == pad_id) continue;
    if (y < 0 || y >= z.cols()) throw std::out_of_range("cross_entropy: label out of range");
    total -= logp(t, y);
  }
  const int il = logits.id();
  return logits.graph().make(Matrix<Scalar>::Constant(1, 1, total), {logits},
                             [il, labels, pad_id, logp = std::move(logp)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
                               Matrix<Scalar> d = logp.array().exp().matrix();
                               for (Index t = 0; t < d.rows(); ++t) {
                                 const int y = labels[static_cast<std::size_t>(t)];
                                 if (y == pad_id) {
                                   d.row(t).setZero();
                                 } else {
                                   d(t, y) -= Scalar(1);
                                 }
                               }
                               g.accumulate(il, grad(0, 0) * d);
                             });
}

/// Summed KL(teacher || student) over rows where `keep` holds. The teacher
/// logits are a constant; only the student receives a gradient.
template <typename Scalar>
Var<Scalar> kl_div_sum(const Var<Scalar>& student_logits, const Matrix<Scalar>& teacher_logits,
                       const std::vector<bool>& keep) {
  const auto& z = student_logits.value();
  detail::require_same_shape(z.rows(), z.cols(), teacher_logits.rows(), teacher_logits.cols(), "kl_div");
  if (static_cast<Index>(keep.size()) != z.rows()) throw std::invalid_argument("kl_div: mask length mismatch");
  Matrix<Scalar> logp = detail::log_softmax_rows(z);
  Matrix<Scalar> logq = detail::log_softmax_rows(teacher_logits);
  Matrix<Scalar> q = logq.array().exp().matrix();
  Scalar total = 0;
  for (Index t = 0; t < z.rows(); ++t) {
    if (!keep[static_cast<std::size_t>(t)]) continue;
    for (Index c = 0; c < z.cols(); ++c) {
      if (q(t, c) > Scalar(0)) total += q(t, c) * (logq(t, c) - logp(t, c));
    }
  }
  const int is = student_logits.id();
  return student_logits.graph().make(
      Matrix<Scalar>::Constant(1, 1, total), {student_logits},
      [is, keep, logp = std::move(logp), q = std::move(q)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
        Matrix<Scalar> d = logp.array().exp().matrix() - q;
        for (Index t = 0; t < d.rows(); ++t) {
          if (!keep[static_cast<std::size_t>(t)]) d.row(t).setZero();
        }
        g.accumulate(is, grad(0, 0) * d);
      });
}

/// Mean squared error between a node and a constant target of equal shape.
template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Matrix<Scalar>& target) {
  detail::require_same_shape(a.rows(), a.cols(), target.rows(), target.cols(), "mse");
  const Scalar count = static_cast<Scalar>(a.value().size());
  Matrix<Scalar> diff = a.value() - target;
  const Scalar value = diff.squaredNorm() / count;
  const int ia = a.id();
  return a.graph().make(Matrix<Scalar>::Constant(1, 1, value), {a},
                        [ia, count, diff = std::move(diff)](Graph<Scalar>& g, const Matrix<Scalar>& grad) {
                          g.accumulate(ia, (Scalar(2) * grad(0, 0) / count) * diff);
                        });
}

}  // namespace dk
