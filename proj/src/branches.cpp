#include <hsd/branches.hpp>
#include <hsd/errors.hpp>

#include <algorithm>

namespace hsd {

std::vector<Parameter*> BranchParams::parameters() {
  std::vector<Parameter*> out;
  for (nn::BiLstm* b : {&f_ta, &f_ia, &f_ie})
    for (Parameter* p : b->parameters()) out.push_back(p);
  for (nn::Linear* l : {&l_ta, &l_ia, &l_ie, &l_c_prior, &l_c_full})
    for (Parameter* p : l->parameters()) out.push_back(p);
  return out;
}

BranchParams make_branches(nn::Rng& rng) {
  BranchParams p;
  p.f_ta = nn::make_bilstm("f_ta", kEmbeddingDim, nn::kHiddenDim, rng);
  p.f_ia = nn::make_bilstm("f_ia", kEmbeddingDim, nn::kHiddenDim, rng);
  p.f_ie = nn::make_bilstm("f_ie", kEmbeddingDim, nn::kHiddenDim, rng);
  p.l_ta = nn::make_linear("l_ta", nn::kEncodingDim, kClasses, rng);
  p.l_ia = nn::make_linear("l_ia", nn::kEncodingDim, kRepDim, rng);
  p.l_ie = nn::make_linear("l_ie", nn::kEncodingDim, kRepDim, rng);
  p.l_c_prior = nn::make_linear("l_c_prior", kClasses + kRepDim, kClasses, rng);
  p.l_c_full = nn::make_linear("l_c_full", kRepDim + kClasses + kRepDim, kClasses, rng);
  p.f_ia.set_trainable(false);
  return p;
}

TargetEncoding encode_target(Graph& g, BranchParams& p, const Matrix& tokens) {
  const nn::Encoded enc = nn::bilstm_encode(g, p.f_ta, tokens);
  return {enc.output, nn::linear(g, p.l_ta, ad::sigmoid(enc.output))};
}

IntraSummary summarize_history(const nn::BiLstm& f_ia, const TextEncoder& enc, std::span<const Post* const> history) {
  std::vector<const Post*> ordered;
  for (const Post* p : history) {
    if (!p->tokens.empty()) ordered.push_back(p);
  }
  std::sort(ordered.begin(), ordered.end(), [](const Post* a, const Post* b) {
    return a->id != b->id ? a->id < b->id : a->text < b->text;
  });
  IntraSummary s;
  if (ordered.empty()) return s;
  std::vector<Matrix> seqs;
  seqs.reserve(ordered.size());
  for (const Post* p : ordered) seqs.push_back(enc.embed(*p));
  const Matrix encoded = nn::bilstm_encode_batch(f_ia, seqs);
  const Matrix act = hsd::sigmoid(encoded);
  for (Eigen::Index j = 0; j < act.cols(); ++j) s.activation_sum += act.col(j);
  s.count = ordered.size();
  return s;
}

Vector intra_representation(const nn::Linear& l_ia, const IntraSummary& summary) {
  if (summary.count == 0) return hsd::sigmoid(Vector::Zero(l_ia.out_dim())).eval();
  const Vector pre = l_ia.weight.value * summary.activation_sum +
                     static_cast<Scalar>(summary.count) * l_ia.bias.value.col(0);
  return hsd::sigmoid(pre);
}

Var intra_representation(Graph& g, nn::Linear& l_ia, const IntraSummary& summary) {
  if (summary.count == 0) return g.constant(hsd::sigmoid(Matrix::Zero(l_ia.out_dim(), 1)));
  Var w = g.parameter(l_ia.weight);
  Var b = g.parameter(l_ia.bias);
  Var pre = ad::add(ad::matmul(w, g.constant(summary.activation_sum)),
                    ad::scale(b, static_cast<Scalar>(summary.count)));
  return ad::sigmoid(pre);
}

Matrix encode_pool(const nn::BiLstm& f_ie, std::span<const Matrix> posts) {
  return nn::bilstm_encode_batch(f_ie, posts).transpose();
}

InterStep inter_step(Graph& g, BranchParams& p, const Matrix& tokens, const nn::LstmCarry* carry) {
  const nn::Encoded enc = nn::bilstm_encode(g, p.f_ie, tokens, carry);
  return {enc.output, enc.state, nn::linear(g, p.l_ie, ad::sigmoid(enc.output))};
}

Var predict_prior(Graph& g, BranchParams& p, Var r_ta, Var r_ia) {
  return ad::softmax(nn::linear(g, p.l_c_prior, ad::concat({r_ta, r_ia})));
}

Var predict_full(Graph& g, BranchParams& p, Var r_ie, Var r_ta, Var r_ia) {
  return ad::softmax(nn::linear(g, p.l_c_full, ad::concat({r_ie, r_ta, r_ia})));
}

Matrix build_state(const Vector& o_ie, const Matrix& pool_enc, const Vector& o_ta, const Vector& r_ia) {
  if (o_ie.size() != nn::kEncodingDim || pool_enc.cols() != nn::kEncodingDim || o_ta.size() != nn::kEncodingDim ||
      r_ia.size() != kRepDim) {
    throw Error(ErrorCode::ShapeMismatch, "build_state: expected 128/128/128/64 wide inputs");
  }
  const Eigen::Index n = pool_enc.rows();
  Matrix s(n, kStateWidth);
  s.leftCols(nn::kEncodingDim) = o_ie.transpose().replicate(n, 1);
  s.middleCols(nn::kEncodingDim, nn::kEncodingDim) = pool_enc;
  s.middleCols(2 * nn::kEncodingDim, nn::kEncodingDim) = o_ta.transpose().replicate(n, 1);
  s.rightCols(kRepDim) = r_ia.transpose().replicate(n, 1);
  return s;
}

}  // namespace hsd
