#include <hsd/checkpoint.hpp>
#include <hsd/errors.hpp>
#include <hsd/nn.hpp>
#include <hsd/optim.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace hsd;
namespace fs = std::filesystem;

namespace {

Matrix random_seq(int dim, int len, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  Matrix m(dim, len);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  ad::Parameter w("w", Matrix::Constant(2, 3, 0.7));
  optim::Adam adam({&w}, {.lr = 0.1});
  for (int k = 0; k < 10; ++k) {
    w.zero_grad();
    adam.step();
  }
  EXPECT_EQ(w.value, Matrix::Constant(2, 3, 0.7));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ad::Parameter w("w", Matrix::Zero(1, 1));
  optim::Adam adam({&w}, {.lr = 0.01});
  w.grad(0, 0) = 123.0;
  adam.step();
  EXPECT_NEAR(w.value(0, 0), -0.01, 1e-9);
}

TEST(Adam, MinimizesQuadratic) {
  ad::Parameter w("w", Matrix::Zero(1, 1));
  optim::Adam adam({&w}, {.lr = 0.1});
  for (int k = 0; k < 200; ++k) {
    w.grad(0, 0) = 2.0 * (w.value(0, 0) - 3.0);
    adam.step();
  }
  EXPECT_LT(std::abs(w.value(0, 0) - 3.0), 0.1);
}

TEST(Adam, FrozenParameterSkipped) {
  ad::Parameter w("w", Matrix::Ones(1, 1));
  w.trainable = false;
  optim::Adam adam({&w}, {.lr = 0.1});
  w.grad(0, 0) = 5.0;
  adam.step();
  EXPECT_EQ(w.value(0, 0), 1.0);
}

TEST(Clip, RescalesToMaxNorm) {
  ad::Parameter a("a", Matrix::Zero(1, 2)), b("b", Matrix::Zero(1, 1));
  a.grad << 3.0, 4.0;
  b.grad << 12.0;
  const Scalar before = optim::clip_global_norm({&a, &b}, 5.0);
  EXPECT_DOUBLE_EQ(before, 13.0);
  EXPECT_NEAR(optim::global_grad_norm({&a, &b}), 5.0, 1e-12);
  EXPECT_NEAR(a.grad(0, 0) / a.grad(0, 1), 0.75, 1e-12);
}

TEST(Clip, SmallNormUntouched) {
  ad::Parameter a("a", Matrix::Zero(1, 2));
  a.grad << 0.3, 0.4;
  optim::clip_global_norm({&a}, 5.0);
  EXPECT_EQ(a.grad(0, 0), 0.3);
  EXPECT_EQ(a.grad(0, 1), 0.4);
}

TEST(BiLstm, PlainMatchesGraph) {
  nn::Rng rng(3);
  nn::BiLstm lstm = nn::make_bilstm("l", 7, 5, rng);
  for (int len : {1, 2, 9}) {
    const Matrix seq = random_seq(7, len, static_cast<std::uint64_t>(len));
    ad::Graph g;
    const nn::Encoded enc = nn::bilstm_encode(g, lstm, seq);
    const nn::PlainEncoded plain = nn::bilstm_encode(lstm, seq);
    ASSERT_EQ(enc.output.rows(), 10);
    EXPECT_LT((enc.output.value() - plain.output).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((enc.state.c_bwd.value() - plain.state.c_bwd).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BiLstm, CarryMatchesGraph) {
  nn::Rng rng(4);
  nn::BiLstm lstm = nn::make_bilstm("l", 6, 4, rng);
  const Matrix first = random_seq(6, 3, 1), second = random_seq(6, 5, 2);
  ad::Graph g;
  const nn::Encoded a = nn::bilstm_encode(g, lstm, first);
  const nn::Encoded b = nn::bilstm_encode(g, lstm, second, &a.state);
  const nn::PlainEncoded pa = nn::bilstm_encode(lstm, first);
  const nn::PlainEncoded pb = nn::bilstm_encode(lstm, second, &pa.state);
  EXPECT_LT((b.output.value() - pb.output).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((pb.output - nn::bilstm_encode(lstm, second).output).norm(), 1e-6);
}

TEST(BiLstm, BatchMatchesSingle) {
  nn::Rng rng(5);
  nn::BiLstm lstm = nn::make_bilstm("l", 8, 6, rng);
  std::vector<Matrix> seqs = {random_seq(8, 4, 1), random_seq(8, 1, 2), random_seq(8, 7, 3)};
  seqs.push_back(seqs[0]);
  seqs.push_back(Matrix::Zero(8, 3));
  const Matrix batch = nn::bilstm_encode_batch(lstm, seqs);
  ASSERT_EQ(batch.cols(), 5);
  for (std::size_t j = 0; j < seqs.size(); ++j) {
    const Vector single = nn::bilstm_encode(lstm, seqs[j]).output;
    EXPECT_LT((batch.col(static_cast<Eigen::Index>(j)) - single).cwiseAbs().maxCoeff(), 1e-12) << j;
  }
}

TEST(BiLstm, EmptySequenceRejected) {
  nn::Rng rng(6);
  nn::BiLstm lstm = nn::make_bilstm("l", 3, 2, rng);
  EXPECT_THROW(nn::bilstm_encode(lstm, Matrix(3, 0)), Error);
}

TEST(BiLstm, ForgetBiasStartsAtOne) {
  nn::Rng rng(7);
  nn::BiLstm lstm = nn::make_bilstm("l", 3, 4, rng);
  EXPECT_EQ(lstm.forward.bias.value.block(4, 0, 4, 1), Matrix::Ones(4, 1));
  EXPECT_EQ(lstm.forward.bias.value.block(0, 0, 4, 1).norm(), 0.0);
}

TEST(Linear, InitRange) {
  nn::Rng rng(8);
  const nn::Linear l = nn::make_linear("f", 100, 3, rng);
  EXPECT_LE(l.weight.value.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_EQ(l.bias.value.norm(), 0.0);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const fs::path path = fs::temp_directory_path() / "hsd_ckpt_test.bin";
  TensorMap t;
  t["a"] = random_seq(4, 3, 9);
  t["a"](0, 0) = std::nextafter(1.0, 2.0);
  t["b"] = Matrix::Constant(1, 1, -0.0);
  t["empty"] = Matrix(0, 5);
  save_tensors(path, t);
  const TensorMap back = load_tensors(path);
  ASSERT_EQ(back.size(), t.size());
  for (const auto& [name, m] : t) {
    const Matrix& r = back.at(name);
    ASSERT_EQ(r.rows(), m.rows());
    ASSERT_EQ(r.cols(), m.cols());
    EXPECT_EQ(std::memcmp(r.data(), m.data(), sizeof(Scalar) * static_cast<std::size_t>(m.size())), 0) << name;
  }
  EXPECT_TRUE(std::signbit(back.at("b")(0, 0)));
}

TEST(Checkpoint, BadMagicRejected) {
  const fs::path path = fs::temp_directory_path() / "hsd_ckpt_bad.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT and more";
  }
  EXPECT_THROW(load_tensors(path), Error);
  EXPECT_THROW(load_tensors(fs::temp_directory_path() / "hsd_ckpt_missing.bin"), Error);
}
