#pragma once

#include <hsd/autodiff.hpp>

#include <random>
#include <span>
#include <string>
#include <vector>

namespace hsd::nn {

using ad::Graph;
using ad::Parameter;
using ad::Var;
using Rng = std::mt19937_64;

inline constexpr int kEmbeddingDim = 200;
inline constexpr int kHiddenDim = 64;
inline constexpr int kEncodingDim = 2 * kHiddenDim;

struct Linear {
  Parameter weight;  // out x in
  Parameter bias;    // out x 1

  Eigen::Index in_dim() const { return weight.value.cols(); }
  Eigen::Index out_dim() const { return weight.value.rows(); }
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
Linear make_linear(const std::string& name, int in_dim, int out_dim, Rng& rng);

Var linear(Graph& g, Linear& layer, Var x);
Vector linear(const Linear& layer, const Vector& x);

/// One direction of an LSTM. Gate rows are stacked as [input, forget, cell, output].
struct LstmDirection {
  Parameter w_ih;  // 4H x D
  Parameter w_hh;  // 4H x H
  Parameter bias;  // 4H x 1

  Eigen::Index hidden() const { return w_hh.value.cols(); }
  std::vector<Parameter*> parameters() { return {&w_ih, &w_hh, &bias}; }
};

struct BiLstm {
  LstmDirection forward;
  LstmDirection backward;

  std::vector<Parameter*> parameters();
  void set_trainable(bool on);
};

/// Forget-gate bias starts at +1, other biases at 0.
BiLstm make_bilstm(const std::string& name, int input_dim, int hidden_dim, Rng& rng);

struct CellOutput {
  Var h;
  Var c;
};

/// c' = f*c + i*g, h' = o*tanh(c').
CellOutput lstm_cell(Graph& g, LstmDirection& p, Var x, Var h, Var c);

/// Fused gate nonlinearity: takes 4H pre-activations and c, returns [h'; c'].
Var lstm_gate_update(Var preact, Var c_prev);

/// Carried (h, c) of both directions.
struct LstmCarry {
  Var h_fwd, c_fwd, h_bwd, c_bwd;
};

struct HiddenState {
  Vector h_fwd, c_fwd, h_bwd, c_bwd;
  static HiddenState zeros(Eigen::Index hidden);
};

struct Encoded {
  Var output;  // [final forward h; final backward h]
  LstmCarry state;
};

/// `seq` holds one input vector per column. Without a carry both directions
/// start from zero.
Encoded bilstm_encode(Graph& g, BiLstm& p, const Matrix& seq, const LstmCarry* carry = nullptr);

struct PlainEncoded {
  Vector output;
  HiddenState state;
};

PlainEncoded bilstm_encode(const BiLstm& p, const Matrix& seq, const HiddenState* carry = nullptr);

/// Zero-state encodings of many sequences at once; column j encodes seqs[j].
Matrix bilstm_encode_batch(const BiLstm& p, std::span<const Matrix> seqs);

}  // namespace hsd::nn
