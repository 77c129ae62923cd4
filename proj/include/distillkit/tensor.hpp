#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dk {

/// Row-major dense matrix; every tensor value and gradient lives in one of these.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Dense tensor with an optional gradient buffer.
///
/// Storage is a row-major matrix whose column count is the last dimension and
/// whose row count is the product of the leading dimensions; a rank-1 tensor of
/// length n is stored as 1 x n. The gradient is `mutable`: backward passes
/// accumulate into it through const references to the owning model.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape, bool requires_grad = true)
      : shape_(std::move(shape)), requires_grad_(requires_grad) {
    const auto [rows, cols] = storage_dims(shape_);
    value_ = Matrix<Scalar>::Zero(rows, cols);
  }

  explicit Tensor(Matrix<Scalar> value, bool requires_grad = true)
      : shape_{value.rows(), value.cols()}, value_(std::move(value)), requires_grad_(requires_grad) {}

  const std::vector<Index>& shape() const { return shape_; }
  Index size() const { return value_.size(); }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }

  Matrix<Scalar>& value() { return value_; }
  const Matrix<Scalar>& value() const { return value_; }

  /// Empty until something accumulates into it.
  Matrix<Scalar>& grad() const { return grad_; }
  bool has_grad() const { return grad_.size() != 0; }
  void zero_grad() const { grad_.resize(0, 0); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool all_finite() const { return value_.allFinite() && (grad_.size() == 0 || grad_.allFinite()); }

 private:
  static std::pair<Index, Index> storage_dims(const std::vector<Index>& shape) {
    for (Index d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    }
    if (shape.empty()) return {1, 1};
    if (shape.size() == 1) return {1, shape[0]};
    const Index rows = std::accumulate(shape.begin(), shape.end() - 1, Index{1}, std::multiplies<>());
    return {rows, shape.back()};
  }

  std::vector<Index> shape_;
  Matrix<Scalar> value_;
  mutable Matrix<Scalar> grad_;
  bool requires_grad_ = true;
};

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Matrix<Scalar>& value() const { return graph_->value(id_); }
  const Matrix<Scalar>& grad() const { return graph_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return graph_->needs_grad(id_); }

  Scalar scalar() const {
    if (value().size() != 1) throw std::logic_error("Var::scalar on a non-scalar node");
    return value()(0, 0);
  }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

/// Append-only reverse-mode tape.
///
/// Nodes are created in topological order, so backward walks ids downwards.
/// With grad disabled no backward closures are stored and the graph is a
/// plain evaluator. Parameter leaves reference the tensor's storage rather
/// than copying it.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Graph&, const Mat&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var<Scalar> param(const Tensor<Scalar>& tensor) {
    Node node;
    node.ref = &tensor.value();
    node.needs_grad = grad_enabled_ && tensor.requires_grad();
    node.sink = node.needs_grad ? &tensor : nullptr;
    return push(std::move(node));
  }

  Var<Scalar> constant(Mat value) {
    Node node;
    node.value = std::move(value);
    return push(std::move(node));
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ref ? *n.ref : n.value;
  }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  /// Creates an op node. `backward` is dropped when no input needs a gradient.
  Var<Scalar> make(Mat value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    for (const auto& in : inputs) {
      if (&in.graph() != this) throw std::logic_error("Var belongs to a different graph");
      node.needs_grad = node.needs_grad || needs_grad(in.id());
    }
    if (node.needs_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Adds a sparse row update: grad.row(rows[i]) += g.row(i).
  template <typename Derived>
  void accumulate_rows(int id, const std::vector<int>& rows, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(value(id).rows(), value(id).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) n.grad.row(rows[i]) += g.row(static_cast<Index>(i));
  }

  /// Runs reverse accumulation from a scalar root. Parameter gradients are
  /// added to the owning tensors' grad buffers.
  void backward(const Var<Scalar>& root, Scalar seed = Scalar(1)) {
    if (&root.graph() != this) throw std::logic_error("root belongs to a different graph");
    if (root.value().size() != 1) throw std::invalid_argument("backward requires a scalar root");
    if (!needs_grad(root.id())) return;
    nodes_[static_cast<std::size_t>(root.id())].grad = Mat::Constant(1, 1, seed);
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.sink) {
        Mat& target = n.sink->grad();
        if (target.size() == 0) {
          target = n.grad;
        } else {
          target += n.grad;
        }
      }
    }
  }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    BackwardFn backward;
    const Tensor<Scalar>* sink = nullptr;
    bool needs_grad = false;
  };

  Var<Scalar> push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace dk
