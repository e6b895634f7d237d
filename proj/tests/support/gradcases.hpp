#pragma once
// Finite-difference cases for every graph op and the full model loss, shared
// by the unit suite and the acceptance run.

#include <hsd/autodiff.hpp>
#include <hsd/branches.hpp>
#include <hsd/nn.hpp>

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace hsd::testing {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

// Reduces any node to a scalar through fixed random weights so that every
// output coefficient carries a distinct gradient.
inline ad::Var weighted_sum(ad::Graph& g, ad::Var v, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  return ad::sum(ad::mul(v, g.constant(random_matrix(v.rows(), v.cols(), rng))));
}

struct GradCase {
  std::string name;
  std::function<GradCheck(std::uint64_t seed)> run;
};

inline GradCase binary_case(std::string name, Eigen::Index ar, Eigen::Index ac, Eigen::Index br, Eigen::Index bc,
                            std::function<ad::Var(ad::Var, ad::Var)> op) {
  return {name, [=](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            ad::Parameter a("a", random_matrix(ar, ac, rng)), b("b", random_matrix(br, bc, rng));
            return check_gradients(
                {&a, &b}, [&](ad::Graph& g) { return weighted_sum(g, op(g.parameter(a), g.parameter(b)), seed); },
                seed, 64);
          }};
}

inline GradCase unary_case(std::string name, Eigen::Index r, Eigen::Index c, std::function<ad::Var(ad::Var)> op,
                           double scale = 1.0) {
  return {name, [=](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            ad::Parameter a("a", random_matrix(r, c, rng, scale));
            return check_gradients(
                {&a}, [&](ad::Graph& g) { return weighted_sum(g, op(g.parameter(a)), seed); }, seed, 64);
          }};
}

// Target encoding, a trainable intra head, a two-step carried inter episode
// and both fused predictions, at full model width.
inline GradCheck full_model_check(std::uint64_t seed) {
  nn::Rng rng(seed);
  BranchParams p = make_branches(rng);
  p.l_ia.weight.trainable = p.l_ia.bias.trainable = true;
  std::mt19937_64 r2(seed + 5);
  for (ad::Parameter* q : {&p.l_c_prior.bias, &p.l_c_full.bias, &p.l_ta.bias, &p.l_ie.bias, &p.l_ia.bias}) {
    q->value = random_matrix(q->value.rows(), 1, r2, 0.5);
  }
  const Matrix target = random_matrix(nn::kEmbeddingDim, 3, r2, 0.1);
  const Matrix n1 = random_matrix(nn::kEmbeddingDim, 2, r2, 0.1), n2 = random_matrix(nn::kEmbeddingDim, 2, r2, 0.1);
  IntraSummary summary;
  summary.count = 3;
  summary.activation_sum = (random_matrix(nn::kEncodingDim, 1, r2).array() * 0.5 + 1.5).matrix();
  const int label = static_cast<int>(seed % 2);
  auto loss = [&](ad::Graph& g) {
    TargetEncoding te = encode_target(g, p, target);
    ad::Var r_ia = intra_representation(g, p.l_ia, summary);
    ad::Var prior = predict_prior(g, p, te.r_ta, r_ia);
    InterStep s0 = inter_step(g, p, target, nullptr);
    InterStep s1 = inter_step(g, p, n1, &s0.carry);
    InterStep s2 = inter_step(g, p, n2, &s1.carry);
    ad::Var y = predict_full(g, p, s2.r_ie, te.r_ta, r_ia);
    return ad::add(ad::cross_entropy(y, label), ad::scale(ad::cross_entropy(prior, label), 0.5));
  };
  return check_gradients(p.parameters(), loss, seed, 6);
}

inline std::vector<GradCase> gradient_cases() {
  using ad::Var;
  std::vector<GradCase> c;
  c.push_back(binary_case("matmul", 4, 3, 3, 5, [](Var a, Var b) { return ad::matmul(a, b); }));
  c.push_back(binary_case("add", 4, 3, 4, 3, [](Var a, Var b) { return ad::add(a, b); }));
  c.push_back(binary_case("sub", 4, 3, 4, 3, [](Var a, Var b) { return ad::sub(a, b); }));
  c.push_back(binary_case("mul", 4, 3, 4, 3, [](Var a, Var b) { return ad::mul(a, b); }));
  c.push_back(binary_case("add_broadcast", 4, 3, 4, 1, [](Var a, Var b) { return ad::add_broadcast(a, b); }));
  c.push_back(binary_case("concat", 4, 1, 3, 1, [](Var a, Var b) { return ad::concat({a, b, a}); }));
  c.push_back(binary_case("sum_all", 3, 2, 3, 2, [](Var a, Var b) {
    std::vector<Var> parts{a, b, a};
    return ad::sum_all(parts);
  }));
  c.push_back(binary_case("lstm_gate_update", 12, 1, 3, 1, [](Var pre, Var cp) { return nn::lstm_gate_update(pre, cp); }));
  c.push_back(unary_case("scale", 5, 2, [](Var a) { return ad::scale(a, -2.5); }));
  c.push_back(unary_case("sigmoid", 5, 2, [](Var a) { return ad::sigmoid(a); }, 3.0));
  c.push_back(unary_case("tanh", 5, 2, [](Var a) { return ad::tanh(a); }, 3.0));
  c.push_back(unary_case("sum", 5, 2, [](Var a) { return ad::sum(a); }));
  c.push_back(unary_case("rows", 6, 1, [](Var a) { return ad::rows(a, 2, 3); }));
  c.push_back(unary_case("col", 4, 3, [](Var a) { return ad::col(a, 1); }));
  c.push_back(unary_case("pick", 4, 1, [](Var a) { return ad::pick(a, 2); }));
  c.push_back(unary_case("softmax", 5, 1, [](Var a) { return ad::softmax(a); }, 4.0));
  c.push_back(unary_case("softmax_row", 1, 6, [](Var a) { return ad::softmax(a); }, 4.0));
  c.push_back(unary_case("log_softmax", 5, 1, [](Var a) { return ad::log_softmax(a); }, 4.0));
  c.push_back(unary_case("cross_entropy", 2, 1, [](Var a) { return ad::cross_entropy(ad::softmax(a), 1); }, 2.0));
  c.push_back({"linear", [](std::uint64_t seed) {
                 nn::Rng rng(seed);
                 nn::Linear l = nn::make_linear("l", 6, 3, rng);
                 std::mt19937_64 r2(seed + 1000);
                 l.bias.value = random_matrix(3, 1, r2);
                 const Matrix x = random_matrix(6, 1, r2);
                 return check_gradients(l.parameters(), [&](ad::Graph& g) {
                   return ad::cross_entropy(ad::softmax(nn::linear(g, l, g.constant(x))), seed % 3 == 0 ? 0 : 1);
                 }, seed, 18);
               }});
  c.push_back({"bilstm_carry", [](std::uint64_t seed) {
                 nn::Rng rng(seed);
                 nn::BiLstm lstm = nn::make_bilstm("f", 5, 4, rng);
                 std::mt19937_64 r2(seed + 77);
                 const Matrix first = random_matrix(5, 3, r2), second = random_matrix(5, 2, r2);
                 return check_gradients(lstm.parameters(), [&](ad::Graph& g) {
                   nn::Encoded a = nn::bilstm_encode(g, lstm, first);
                   nn::Encoded b = nn::bilstm_encode(g, lstm, second, &a.state);
                   return weighted_sum(g, ad::concat({a.output, b.output, b.state.c_fwd, b.state.c_bwd}), seed);
                 }, seed, 20);
               }});
  c.push_back({"full_model", full_model_check});
  return c;
}

}  // namespace hsd::testing
