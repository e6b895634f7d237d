#pragma once

// The three-branch classifier: a target encoder, an aggregate over the
// author's history, and a recurrent encoder over selected similar posts whose
// hidden state is carried from one selection to the next.

#include <hsd/nn.hpp>
#include <hsd/textio.hpp>

#include <span>
#include <vector>

namespace hsd {

using ad::Graph;
using ad::Parameter;
using ad::Var;

inline constexpr int kClasses = 2;
inline constexpr int kRepDim = 64;
inline constexpr int kStateWidth = 3 * nn::kEncodingDim + kRepDim;  // 448

struct BranchParams {
  nn::BiLstm f_ta;  // target encoder
  nn::BiLstm f_ia;  // history encoder, frozen
  nn::BiLstm f_ie;  // similar-post encoder
  nn::Linear l_ta;       // 128 -> 2
  nn::Linear l_ia;       // 128 -> 64
  nn::Linear l_ie;       // 128 -> 64
  nn::Linear l_c_prior;  // 66 -> 2
  nn::Linear l_c_full;   // 130 -> 2

  std::vector<Parameter*> parameters();
};

BranchParams make_branches(nn::Rng& rng);

struct TargetEncoding {
  Var o_ta;  // 128
  Var r_ta;  // 2, l_ta(sigmoid(o_ta))
};

TargetEncoding encode_target(Graph& g, BranchParams& p, const Matrix& tokens);

/// Sum of sigmoid(o_ia(z)) over a history, plus its size. Enough to form the
/// intra-user representation for any l_ia.
struct IntraSummary {
  Vector activation_sum = Vector::Zero(nn::kEncodingDim);
  std::size_t count = 0;
};

/// Encodes the history in (id, text) order so any permutation of the input
/// yields a bit-identical summary. Posts without tokens are skipped.
IntraSummary summarize_history(const nn::BiLstm& f_ia, const TextEncoder& enc, std::span<const Post* const> history);

/// sigmoid(sum_j l_ia(sigmoid(o_ia(z_j)))).
Vector intra_representation(const nn::Linear& l_ia, const IntraSummary& summary);
Var intra_representation(Graph& g, nn::Linear& l_ia, const IntraSummary& summary);

/// Zero-state encodings of the candidate posts, one 128-d row per post.
Matrix encode_pool(const nn::BiLstm& f_ie, std::span<const Matrix> posts);

struct InterStep {
  Var o_ie;           // 128
  nn::LstmCarry carry;
  Var r_ie;           // 64, l_ie(sigmoid(o_ie))
};

/// Encodes the selected post starting from `carry` (zero state when null).
InterStep inter_step(Graph& g, BranchParams& p, const Matrix& tokens, const nn::LstmCarry* carry);

/// softmax(l_c_prior(r_ta ++ r_ia)).
Var predict_prior(Graph& g, BranchParams& p, Var r_ta, Var r_ia);
/// softmax(l_c_full(r_ie ++ r_ta ++ r_ia)).
Var predict_full(Graph& g, BranchParams& p, Var r_ie, Var r_ta, Var r_ia);

/// Agent state: row j = o_ie ++ pool_enc.row(j) ++ o_ta ++ r_ia (n x 448).
/// Built from plain values, so it carries no gradient path into the encoders.
Matrix build_state(const Vector& o_ie, const Matrix& pool_enc, const Vector& o_ta, const Vector& r_ia);

}  // namespace hsd
