#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Graph is a tape: nodes are appended in evaluation order, so reverse
// index order is a valid topological order for the backward sweep. Trainable
// tensors live outside the tape as Parameters and receive accumulated
// gradients when a backward pass reaches their leaf nodes.

#include <hsd/math.hpp>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hsd::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node on a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  Scalar scalar() const { return value()(0, 0); }

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a Parameter. Frozen parameters behave as constants.
  Var parameter(Parameter& p);
  /// Appends an op result. Throws NumericalFault if the value is not finite.
  Var record(Matrix value, BackwardFn backward);

  const Matrix& value(std::size_t id) const;
  /// Gradient of the root w.r.t. node `id`; empty when the node is unreached.
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& grad(Var v) const { return grad(v.id()); }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.differentiable) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Runs the reverse sweep from a 1x1 root. A graph can be swept once.
  void backward(Var root);

  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool differentiable = false;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return graph_->value(id_); }

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Element-wise product.
Var mul(Var a, Var b);
Var scale(Var a, Scalar k);
/// Adds column vector `b` to every column of `a`.
Var add_broadcast(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax(Var a);
Var log_softmax(Var a);
/// Vertical concatenation of column vectors (or matrices with equal cols).
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Sum of all coefficients, as a 1x1 node.
Var sum(Var a);
/// Element-wise sum of equally shaped nodes.
Var sum_all(std::span<const Var> parts);
Var rows(Var a, Eigen::Index start, Eigen::Index count);
Var col(Var a, Eigen::Index j);
/// Coefficient `i` of a vector, as a 1x1 node.
Var pick(Var a, Eigen::Index i);
/// -ln(dist[label]) with dist clamped to [1e-7, 1-1e-7].
Var cross_entropy(Var dist, int label);

}  // namespace hsd::ad
