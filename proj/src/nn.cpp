#include <hsd/errors.hpp>
#include <hsd/nn.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hsd::nn {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, Scalar bound, Rng& rng) {
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

LstmDirection make_direction(const std::string& name, int input_dim, int hidden, Rng& rng) {
  LstmDirection d;
  d.w_ih = Parameter(name + ".w_ih", uniform_matrix(4 * hidden, input_dim, 1.0 / std::sqrt(Scalar(input_dim)), rng));
  d.w_hh = Parameter(name + ".w_hh", uniform_matrix(4 * hidden, hidden, 1.0 / std::sqrt(Scalar(hidden)), rng));
  Matrix b = Matrix::Zero(4 * hidden, 1);
  b.middleRows(hidden, hidden).setOnes();
  d.bias = Parameter(name + ".bias", std::move(b));
  return d;
}

struct DirectionNodes {
  Var w_ih, w_hh, bias;
};

DirectionNodes bind(Graph& g, LstmDirection& p) {
  return {g.parameter(p.w_ih), g.parameter(p.w_hh), g.parameter(p.bias)};
}

// Gate activations from pre-activations; columns are independent sequences.
struct Gates {
  Matrix i, f, g, o;
};

Gates activate(const Matrix& pre, Eigen::Index h) {
  return {hsd::sigmoid(pre.middleRows(0, h)), hsd::sigmoid(pre.middleRows(h, h)),
          hsd::tanh(pre.middleRows(2 * h, h)), hsd::sigmoid(pre.middleRows(3 * h, h))};
}

// Runs one direction over a sequence on the graph. `reverse` walks the
// columns from last to first.
CellOutput run_direction(const DirectionNodes& n, Var xproj, Var h, Var c, bool reverse) {
  const Eigen::Index len = xproj.cols();
  const Eigen::Index hidden = h.rows();
  for (Eigen::Index step = 0; step < len; ++step) {
    const Eigen::Index t = reverse ? len - 1 - step : step;
    Var pre = ad::add(ad::col(xproj, t), ad::matmul(n.w_hh, h));
    Var hc = lstm_gate_update(pre, c);
    h = ad::rows(hc, 0, hidden);
    c = ad::rows(hc, hidden, hidden);
  }
  return {h, c};
}

void check_input(const Matrix& seq, const LstmDirection& p) {
  if (seq.cols() == 0) throw Error(ErrorCode::EmptySequence, "cannot encode an empty sequence");
  if (seq.rows() != p.w_ih.value.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "input width does not match LSTM input size");
  }
}

void check_finite(const Matrix& m) {
  if (!m.allFinite()) throw Error(ErrorCode::NumericalFault, "non-finite LSTM state");
}

// Masked batched recurrence. Column j of `xproj_steps[t]` is sequence j at
// time t; sequences shorter than t keep their state.
// Input columns of a batch with repeated word vectors collapsed: `unique`
// holds each distinct column once and `source[k]` locates flat column k.
struct PackedInput {
  Matrix unique;
  std::vector<Eigen::Index> source;
  std::vector<Eigen::Index> offset;
  std::vector<Eigen::Index> length;
  Eigen::Index max_len = 0;
};

PackedInput pack(std::span<const Matrix> seqs) {
  PackedInput in;
  std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> seen;
  std::vector<const Scalar*> cols;
  const Eigen::Index dim = seqs.empty() ? 0 : seqs.front().rows();
  Eigen::Index at = 0;
  for (const Matrix& s : seqs) {
    in.offset.push_back(at);
    in.length.push_back(s.cols());
    in.max_len = std::max(in.max_len, s.cols());
    at += s.cols();
    for (Eigen::Index t = 0; t < s.cols(); ++t) {
      const Scalar* data = s.col(t).data();
      const std::uint64_t key = std::hash<std::string_view>{}(
          std::string_view(reinterpret_cast<const char*>(data), static_cast<std::size_t>(dim) * sizeof(Scalar)));
      auto& bucket = seen[key];
      Eigen::Index found = -1;
      for (Eigen::Index u : bucket) {
        if (std::equal(data, data + dim, cols[static_cast<std::size_t>(u)])) {
          found = u;
          break;
        }
      }
      if (found < 0) {
        found = static_cast<Eigen::Index>(cols.size());
        cols.push_back(data);
        bucket.push_back(found);
      }
      in.source.push_back(found);
    }
  }
  in.unique.resize(dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t u = 0; u < cols.size(); ++u) {
    in.unique.col(static_cast<Eigen::Index>(u)) = Eigen::Map<const Vector>(cols[u], dim);
  }
  return in;
}

void run_plain(const LstmDirection& p, const PackedInput& in, bool reverse, Matrix& h, Matrix& c) {
  const Eigen::Index hidden = p.hidden();
  const Eigen::Index n = static_cast<Eigen::Index>(in.length.size());
  Matrix xproj = p.w_ih.value * in.unique;
  xproj.colwise() += p.bias.value.col(0);

  Matrix pre(4 * hidden, n);
  std::vector<Eigen::Index> active;
  for (Eigen::Index t = 0; t < in.max_len; ++t) {
    pre.noalias() = p.w_hh.value * h;
    active.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index len = in.length[static_cast<std::size_t>(j)];
      if (t >= len) continue;
      const Eigen::Index pos = reverse ? len - 1 - t : t;
      pre.col(j) += xproj.col(in.source[static_cast<std::size_t>(in.offset[static_cast<std::size_t>(j)] + pos)]);
      active.push_back(j);
    }
    const Gates gt = activate(pre, hidden);
    const Matrix c_new = gt.f.cwiseProduct(c) + gt.i.cwiseProduct(gt.g);
    const Matrix h_new = gt.o.cwiseProduct(hsd::tanh(c_new));
    if (static_cast<Eigen::Index>(active.size()) == n) {
      c = c_new;
      h = h_new;
    } else {
      for (Eigen::Index j : active) {
        c.col(j) = c_new.col(j);
        h.col(j) = h_new.col(j);
      }
    }
  }
  check_finite(h);
  check_finite(c);
}

}  // namespace

Linear make_linear(const std::string& name, int in_dim, int out_dim, Rng& rng) {
  Linear l;
  l.weight = Parameter(name + ".weight", uniform_matrix(out_dim, in_dim, 1.0 / std::sqrt(Scalar(in_dim)), rng));
  l.bias = Parameter(name + ".bias", Matrix::Zero(out_dim, 1));
  return l;
}

Var linear(Graph& g, Linear& layer, Var x) {
  return ad::add(ad::matmul(g.parameter(layer.weight), x), g.parameter(layer.bias));
}

Vector linear(const Linear& layer, const Vector& x) {
  if (x.size() != layer.in_dim()) throw Error(ErrorCode::ShapeMismatch, "linear: input width");
  return layer.weight.value * x + layer.bias.value.col(0);
}

std::vector<Parameter*> BiLstm::parameters() {
  auto out = forward.parameters();
  for (Parameter* p : backward.parameters()) out.push_back(p);
  return out;
}

void BiLstm::set_trainable(bool on) {
  for (Parameter* p : parameters()) p->trainable = on;
}

BiLstm make_bilstm(const std::string& name, int input_dim, int hidden_dim, Rng& rng) {
  BiLstm b;
  b.forward = make_direction(name + ".forward", input_dim, hidden_dim, rng);
  b.backward = make_direction(name + ".backward", input_dim, hidden_dim, rng);
  return b;
}

Var lstm_gate_update(Var preact, Var c_prev) {
  const Eigen::Index h = c_prev.rows();
  if (preact.rows() != 4 * h || preact.cols() != 1 || c_prev.cols() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "lstm_gate_update: expected 4H and H column vectors");
  }
  Graph& g = *preact.graph();
  const Gates gt = activate(preact.value(), h);
  Matrix out(2 * h, 1);
  out.middleRows(h, h) = gt.f.cwiseProduct(c_prev.value()) + gt.i.cwiseProduct(gt.g);
  out.middleRows(0, h) = gt.o.cwiseProduct(hsd::tanh(out.middleRows(h, h)));
  const auto ip = preact.id(), ic = c_prev.id();
  return g.record(std::move(out), [ip, ic, h](Graph& gr, std::size_t self) {
    const Gates gt = activate(gr.value(ip), h);
    const Matrix& c_prev = gr.value(ic);
    const Matrix& y = gr.value(self);
    const Matrix& gout = gr.grad(self);
    const Matrix tc = hsd::tanh(y.middleRows(h, h));
    const Matrix dh = gout.middleRows(0, h);
    const Matrix dc = gout.middleRows(h, h) +
                      dh.cwiseProduct(gt.o).cwiseProduct((1.0 - tc.array().square()).matrix());
    Matrix dpre(4 * h, 1);
    dpre.middleRows(0, h) = dc.cwiseProduct(gt.g).cwiseProduct(gt.i.cwiseProduct((1.0 - gt.i.array()).matrix()));
    dpre.middleRows(h, h) = dc.cwiseProduct(c_prev).cwiseProduct(gt.f.cwiseProduct((1.0 - gt.f.array()).matrix()));
    dpre.middleRows(2 * h, h) = dc.cwiseProduct(gt.i).cwiseProduct((1.0 - gt.g.array().square()).matrix());
    dpre.middleRows(3 * h, h) = dh.cwiseProduct(tc).cwiseProduct(gt.o.cwiseProduct((1.0 - gt.o.array()).matrix()));
    gr.accumulate(ip, dpre);
    gr.accumulate(ic, dc.cwiseProduct(gt.f));
  });
}

CellOutput lstm_cell(Graph& g, LstmDirection& p, Var x, Var h, Var c) {
  const DirectionNodes n = bind(g, p);
  Var pre = ad::add(ad::add(ad::matmul(n.w_ih, x), ad::matmul(n.w_hh, h)), n.bias);
  Var hc = lstm_gate_update(pre, c);
  const Eigen::Index hidden = p.hidden();
  return {ad::rows(hc, 0, hidden), ad::rows(hc, hidden, hidden)};
}

HiddenState HiddenState::zeros(Eigen::Index hidden) {
  return {Vector::Zero(hidden), Vector::Zero(hidden), Vector::Zero(hidden), Vector::Zero(hidden)};
}

Encoded bilstm_encode(Graph& g, BiLstm& p, const Matrix& seq, const LstmCarry* carry) {
  check_input(seq, p.forward);
  const Eigen::Index hidden = p.forward.hidden();
  LstmCarry init;
  if (carry) {
    init = *carry;
  } else {
    Var zero = g.constant(Matrix::Zero(hidden, 1));
    init = {zero, zero, zero, zero};
  }
  Var x = g.constant(seq);
  const DirectionNodes nf = bind(g, p.forward);
  const DirectionNodes nb = bind(g, p.backward);
  Var proj_f = ad::add_broadcast(ad::matmul(nf.w_ih, x), nf.bias);
  Var proj_b = ad::add_broadcast(ad::matmul(nb.w_ih, x), nb.bias);
  const CellOutput fwd = run_direction(nf, proj_f, init.h_fwd, init.c_fwd, false);
  const CellOutput bwd = run_direction(nb, proj_b, init.h_bwd, init.c_bwd, true);
  return {ad::concat({fwd.h, bwd.h}), {fwd.h, fwd.c, bwd.h, bwd.c}};
}

PlainEncoded bilstm_encode(const BiLstm& p, const Matrix& seq, const HiddenState* carry) {
  check_input(seq, p.forward);
  const Eigen::Index hidden = p.forward.hidden();
  const HiddenState init = carry ? *carry : HiddenState::zeros(hidden);
  const PackedInput in = pack(std::span<const Matrix>(&seq, 1));
  Matrix hf = init.h_fwd, cf = init.c_fwd, hb = init.h_bwd, cb = init.c_bwd;
  run_plain(p.forward, in, false, hf, cf);
  run_plain(p.backward, in, true, hb, cb);
  PlainEncoded out;
  out.output.resize(2 * hidden);
  out.output << hf.col(0), hb.col(0);
  out.state = {hf.col(0), cf.col(0), hb.col(0), cb.col(0)};
  return out;
}

Matrix bilstm_encode_batch(const BiLstm& p, std::span<const Matrix> seqs) {
  const Eigen::Index hidden = p.forward.hidden();
  const Eigen::Index n = static_cast<Eigen::Index>(seqs.size());
  for (const Matrix& s : seqs) check_input(s, p.forward);
  Matrix out(2 * hidden, n);
  if (n == 0) return out;
  const PackedInput in = pack(seqs);
  Matrix hf = Matrix::Zero(hidden, n), cf = hf, hb = hf, cb = hf;
  run_plain(p.forward, in, false, hf, cf);
  run_plain(p.backward, in, true, hb, cb);
  out.topRows(hidden) = hf;
  out.bottomRows(hidden) = hb;
  return out;
}

}  // namespace hsd::nn
