#include <hsd/branches.hpp>
#include <hsd/errors.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace hsd;

namespace {

struct Fixture {
  nn::Rng rng{21};
  BranchParams p = make_branches(rng);
  Vocab vocab;
  EmbeddingTable emb;
  std::vector<Post> history;

  Fixture() {
    for (int k = 0; k < 12; ++k) {
      history.push_back(make_post("h" + std::to_string(k), "u", "word" + std::to_string(k % 5) + " filler text " + std::to_string(k)));
    }
    vocab = build_vocab(history, 1);
    emb = hashed_embeddings(vocab);
  }

  TextEncoder encoder() const { return {vocab, emb}; }
  Matrix tokens(const std::string& text) const { return encoder().embed(make_post("x", "u", text)); }
};

std::vector<const Post*> pointers(const std::vector<Post>& posts) {
  std::vector<const Post*> out;
  for (const Post& p : posts) out.push_back(&p);
  return out;
}

}  // namespace

TEST(Branches, ParameterShapes) {
  Fixture f;
  EXPECT_EQ(f.p.f_ta.forward.w_ih.value.rows(), 4 * nn::kHiddenDim);
  EXPECT_EQ(f.p.f_ta.forward.w_ih.value.cols(), nn::kEmbeddingDim);
  EXPECT_EQ(f.p.l_ta.weight.value.rows(), 2);
  EXPECT_EQ(f.p.l_ta.weight.value.cols(), 128);
  EXPECT_EQ(f.p.l_ia.weight.value.rows(), 64);
  EXPECT_EQ(f.p.l_ie.weight.value.rows(), 64);
  EXPECT_EQ(f.p.l_c_prior.weight.value.cols(), 66);
  EXPECT_EQ(f.p.l_c_full.weight.value.cols(), 130);
  EXPECT_EQ(f.p.l_c_full.weight.value.rows(), 2);
}

TEST(Branches, TargetEncodingMatchesDefinition) {
  Fixture f;
  Graph g;
  const TargetEncoding t = encode_target(g, f.p, f.tokens("word1 filler"));
  ASSERT_EQ(t.o_ta.rows(), 128);
  ASSERT_EQ(t.r_ta.rows(), 2);
  const Vector expected = nn::linear(f.p.l_ta, sigmoid(Vector(t.o_ta.value())));
  EXPECT_LT((t.r_ta.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Branches, EmptyHistoryIsHalf) {
  Fixture f;
  const IntraSummary s = summarize_history(f.p.f_ia, f.encoder(), {});
  EXPECT_EQ(s.count, 0u);
  const Vector r = intra_representation(f.p.l_ia, s);
  ASSERT_EQ(r.size(), 64);
  EXPECT_EQ(r, Vector::Constant(64, 0.5));
}

TEST(Branches, HistoryPermutationInvariant) {
  Fixture f;
  const auto ref = intra_representation(f.p.l_ia, summarize_history(f.p.f_ia, f.encoder(), pointers(f.history)));
  EXPECT_TRUE(((ref.array() > 0) && (ref.array() < 1)).all());
  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    std::vector<Post> shuffled = f.history;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto got = intra_representation(f.p.l_ia, summarize_history(f.p.f_ia, f.encoder(), pointers(shuffled)));
    EXPECT_EQ(got, ref);
  }
}

TEST(Branches, IntraGraphMatchesPlain) {
  Fixture f;
  const IntraSummary s = summarize_history(f.p.f_ia, f.encoder(), pointers(f.history));
  Graph g;
  const Var r = intra_representation(g, f.p.l_ia, s);
  EXPECT_LT((r.value() - intra_representation(f.p.l_ia, s)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Branches, InterStepCarriesState) {
  Fixture f;
  Graph g;
  const InterStep first = inter_step(g, f.p, f.tokens("word2 filler"), nullptr);
  const InterStep second = inter_step(g, f.p, f.tokens("word3 text"), &first.carry);
  const InterStep fresh = inter_step(g, f.p, f.tokens("word3 text"), nullptr);
  ASSERT_EQ(second.r_ie.rows(), 64);
  EXPECT_GT((second.o_ie.value() - fresh.o_ie.value()).norm(), 1e-8);
  const nn::PlainEncoded a = nn::bilstm_encode(f.p.f_ie, f.tokens("word2 filler"));
  const nn::PlainEncoded b = nn::bilstm_encode(f.p.f_ie, f.tokens("word3 text"), &a.state);
  EXPECT_LT((second.o_ie.value() - b.output).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Branches, PredictionsAreDistributions) {
  Fixture f;
  Graph g;
  const TargetEncoding t = encode_target(g, f.p, f.tokens("word1"));
  const Var r_ia = g.constant(Vector::Constant(64, 0.5));
  const InterStep s = inter_step(g, f.p, f.tokens("word4"), nullptr);
  for (const Var y : {predict_prior(g, f.p, t.r_ta, r_ia), predict_full(g, f.p, s.r_ie, t.r_ta, r_ia)}) {
    ASSERT_EQ(y.rows(), 2);
    EXPECT_NEAR(y.value().sum(), 1.0, 1e-12);
    EXPECT_TRUE((y.value().array() > 0).all());
  }
}

TEST(Branches, StateLayout) {
  const Vector o_ie = Vector::Constant(128, 1.0), o_ta = Vector::Constant(128, 3.0), r_ia = Vector::Constant(64, 4.0);
  Matrix pool(5, 128);
  for (int j = 0; j < 5; ++j) pool.row(j).setConstant(10.0 + j);
  const Matrix s = build_state(o_ie, pool, o_ta, r_ia);
  ASSERT_EQ(s.rows(), 5);
  ASSERT_EQ(s.cols(), kStateWidth);
  for (int j = 0; j < 5; ++j) {
    EXPECT_EQ(s(j, 0), 1.0);
    EXPECT_EQ(s(j, 128), 10.0 + j);
    EXPECT_EQ(s(j, 256), 3.0);
    EXPECT_EQ(s(j, 447), 4.0);
  }
}

TEST(Branches, EncodePoolRows) {
  Fixture f;
  const std::vector<Matrix> posts = {f.tokens("word1"), f.tokens("word2 filler text")};
  const Matrix b = encode_pool(f.p.f_ie, posts);
  ASSERT_EQ(b.rows(), 2);
  ASSERT_EQ(b.cols(), 128);
  EXPECT_LT((b.row(1).transpose() - nn::bilstm_encode(f.p.f_ie, posts[1]).output).cwiseAbs().maxCoeff(), 1e-12);
}
