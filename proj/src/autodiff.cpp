#include <hsd/autodiff.hpp>
#include <hsd/errors.hpp>

#include <sstream>

namespace hsd::ad {

namespace {

Graph& same_graph(Var a, Var b) {
  if (!a.valid() || a.graph() != b.graph()) {
    throw Error(ErrorCode::InvalidArgument, "operands belong to different graphs");
  }
  return *a.graph();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw Error(ErrorCode::ShapeMismatch, os.str());
  }
}

}  // namespace

Var Graph::constant(Matrix value) {
  if (!value.allFinite()) throw Error(ErrorCode::NumericalFault, "non-finite constant");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.differentiable = p.trainable;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Matrix value, BackwardFn backward) {
  if (!value.allFinite()) throw Error(ErrorCode::NumericalFault, "non-finite value in forward pass");
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.differentiable = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

void Graph::backward(Var root) {
  if (backward_done_) throw Error(ErrorCode::GraphState, "backward called twice on the same graph");
  if (root.graph() != this) throw Error(ErrorCode::InvalidArgument, "root belongs to another graph");
  if (root.rows() != 1 || root.cols() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "backward root must be a scalar");
  }
  backward_done_ = true;
  if (!nodes_[root.id()].differentiable) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: " << a.rows() << "x" << a.cols() << " * " << b.rows() << "x" << b.cols();
    throw Error(ErrorCode::ShapeMismatch, os.str());
  }
  const auto ia = a.id(), ib = b.id();
  return g.record(a.value() * b.value(), [ia, ib](Graph& gr, std::size_t self) {
    const Matrix& gout = gr.grad(self);
    gr.accumulate(ia, gout * gr.value(ib).transpose());
    gr.accumulate(ib, gr.value(ia).transpose() * gout);
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return g.record(a.value() + b.value(), [ia, ib](Graph& gr, std::size_t self) {
    gr.accumulate(ia, gr.grad(self));
    gr.accumulate(ib, gr.grad(self));
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return g.record(a.value() - b.value(), [ia, ib](Graph& gr, std::size_t self) {
    gr.accumulate(ia, gr.grad(self));
    gr.accumulate(ib, -gr.grad(self));
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "mul");
  const auto ia = a.id(), ib = b.id();
  return g.record(a.value().cwiseProduct(b.value()), [ia, ib](Graph& gr, std::size_t self) {
    const Matrix& gout = gr.grad(self);
    gr.accumulate(ia, gout.cwiseProduct(gr.value(ib)));
    gr.accumulate(ib, gout.cwiseProduct(gr.value(ia)));
  });
}

Var scale(Var a, Scalar k) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  return g.record(a.value() * k, [ia, k](Graph& gr, std::size_t self) {
    gr.accumulate(ia, gr.grad(self) * k);
  });
}

Var add_broadcast(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "add_broadcast: bias must be a column matching rows");
  }
  const auto ia = a.id(), ib = b.id();
  Matrix out = a.value().colwise() + b.value().col(0);
  return g.record(std::move(out), [ia, ib](Graph& gr, std::size_t self) {
    gr.accumulate(ia, gr.grad(self));
    gr.accumulate(ib, gr.grad(self).rowwise().sum());
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  Matrix out = hsd::sigmoid(a.value());
  return g.record(std::move(out), [ia](Graph& gr, std::size_t self) {
    const Matrix& y = gr.value(self);
    gr.accumulate(ia, gr.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  Matrix out = hsd::tanh(a.value());
  return g.record(std::move(out), [ia](Graph& gr, std::size_t self) {
    const Matrix& y = gr.value(self);
    gr.accumulate(ia, gr.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var softmax(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  Matrix out = hsd::softmax(a.value());
  return g.record(std::move(out), [ia](Graph& gr, std::size_t self) {
    const Matrix& y = gr.value(self);
    const Matrix& gout = gr.grad(self);
    const Scalar dot = gout.cwiseProduct(y).sum();
    gr.accumulate(ia, y.cwiseProduct((gout.array() - dot).matrix()));
  });
}

Var log_softmax(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  Matrix out = hsd::log_softmax(a.value());
  return g.record(std::move(out), [ia](Graph& gr, std::size_t self) {
    const Matrix& gout = gr.grad(self);
    Matrix p = gr.value(self).array().exp().matrix();
    gr.accumulate(ia, gout - p * gout.sum());
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat of nothing");
  Graph& g = *parts.front().graph();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw Error(ErrorCode::InvalidArgument, "concat across graphs");
    if (p.cols() != cols) throw Error(ErrorCode::ShapeMismatch, "concat: column counts differ");
    total += p.rows();
  }
  Matrix out(total, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  layout.reserve(parts.size());
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id(), p.rows());
    offset += p.rows();
  }
  return g.record(std::move(out), [layout = std::move(layout)](Graph& gr, std::size_t self) {
    const Matrix& gout = gr.grad(self);
    Eigen::Index at = 0;
    for (const auto& [id, n] : layout) {
      gr.accumulate(id, gout.middleRows(at, n));
      at += n;
    }
  });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var sum(Var a) {
  Graph& g = *a.graph();
  const auto ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.record(std::move(out), [ia, r, c](Graph& gr, std::size_t self) {
    gr.accumulate(ia, Matrix::Constant(r, c, gr.grad(self)(0, 0)));
  });
}

Var sum_all(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "sum_all of nothing");
  Graph& g = *parts.front().graph();
  Matrix out = parts.front().value();
  std::vector<std::size_t> ids{parts.front().id()};
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_same_shape(parts.front(), parts[i], "sum_all");
    out += parts[i].value();
    ids.push_back(parts[i].id());
  }
  return g.record(std::move(out), [ids = std::move(ids)](Graph& gr, std::size_t self) {
    for (std::size_t id : ids) gr.accumulate(id, gr.grad(self));
  });
}

Var rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "rows: slice out of range");
  }
  Graph& g = *a.graph();
  const auto ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.record(a.value().middleRows(start, count), [ia, r, c, start, count](Graph& gr, std::size_t self) {
    Matrix full = Matrix::Zero(r, c);
    full.middleRows(start, count) = gr.grad(self);
    gr.accumulate(ia, full);
  });
}

Var col(Var a, Eigen::Index j) {
  if (j < 0 || j >= a.cols()) throw Error(ErrorCode::ShapeMismatch, "col: index out of range");
  Graph& g = *a.graph();
  const auto ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.record(a.value().col(j), [ia, r, c, j](Graph& gr, std::size_t self) {
    Matrix full = Matrix::Zero(r, c);
    full.col(j) = gr.grad(self);
    gr.accumulate(ia, full);
  });
}

Var pick(Var a, Eigen::Index i) {
  if (i < 0 || i >= a.size()) throw Error(ErrorCode::ShapeMismatch, "pick: index out of range");
  Graph& g = *a.graph();
  const auto ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value()(i);
  return g.record(std::move(out), [ia, r, c, i](Graph& gr, std::size_t self) {
    Matrix full = Matrix::Zero(r, c);
    full(i) = gr.grad(self)(0, 0);
    gr.accumulate(ia, full);
  });
}

Var cross_entropy(Var dist, int label) {
  if (dist.cols() != 1 || label < 0 || label >= dist.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "cross_entropy: label outside distribution");
  }
  Graph& g = *dist.graph();
  const auto id = dist.id();
  const Scalar p = dist.value()(label);
  Matrix out(1, 1);
  out(0, 0) = hsd::cross_entropy(dist.value(), label);
  const bool clamped = p < kProbClampLow || p > kProbClampHigh;
  const Eigen::Index r = dist.rows();
  return g.record(std::move(out), [id, label, p, clamped, r](Graph& gr, std::size_t self) {
    Matrix d = Matrix::Zero(r, 1);
    if (!clamped) d(label) = -gr.grad(self)(0, 0) / p;
    gr.accumulate(id, d);
  });
}

}  // namespace hsd::ad
