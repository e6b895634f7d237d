#include <hsd/autodiff.hpp>
#include <hsd/errors.hpp>

#include <gtest/gtest.h>

#include "support/gradcases.hpp"

using namespace hsd;
using hsd::ad::Graph;
using hsd::ad::Parameter;
using hsd::ad::Var;

namespace {

constexpr int kSeeds = 50;
constexpr double kTol = 1e-4;

class GradientCase : public ::testing::TestWithParam<std::string> {};

const hsd::testing::GradCase& find_case(const std::string& name) {
  static const auto cases = hsd::testing::gradient_cases();
  for (const auto& c : cases) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("no case " + name);
}

std::vector<std::string> case_names() {
  std::vector<std::string> out;
  for (const auto& c : hsd::testing::gradient_cases()) out.push_back(c.name);
  return out;
}

}  // namespace

TEST_P(GradientCase, MatchesFiniteDifferences) {
  const auto& c = find_case(GetParam());
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto r = c.run(static_cast<std::uint64_t>(seed));
    ASSERT_GT(r.checked, 0);
    ASSERT_LT(r.max_rel_error, kTol) << "seed " << seed << " " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, GradientCase, ::testing::ValuesIn(case_names()),
                         [](const auto& info) { return info.param; });

TEST(GradCheck, CatchesAWrongBackward) {
  Parameter a("a", Matrix::Constant(3, 1, 0.4));
  const auto r = hsd::testing::check_gradients({&a}, [&](Graph& g) {
    Var x = g.parameter(a);
    const auto id = x.id();
    // Forward x^2, backward claims x.
    Var y = g.record(x.value().array().square().matrix(),
                     [id](Graph& gr, std::size_t self) { gr.accumulate(id, gr.grad(self).cwiseProduct(gr.value(id))); });
    return ad::sum(y);
  }, 1);
  EXPECT_GT(r.max_rel_error, 0.4);
}

TEST(AutodiffGraph, BackwardTwiceThrows) {
  Graph g;
  Parameter a("a", Matrix::Ones(1, 1));
  Var s = ad::sum(g.parameter(a));
  g.backward(s);
  EXPECT_THROW(g.backward(s), Error);
}

TEST(AutodiffGraph, NonScalarRootThrows) {
  Graph g;
  Var v = g.constant(Matrix::Ones(2, 1));
  EXPECT_THROW(g.backward(v), Error);
}

TEST(AutodiffGraph, ShapeMismatchIsReported) {
  Graph g;
  try {
    ad::matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(2, 3)));
    FAIL() << "expected ShapeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(AutodiffGraph, FrozenParameterGetsNoGradient) {
  Parameter a("a", Matrix::Constant(2, 1, 0.3));
  a.trainable = false;
  Parameter b("b", Matrix::Constant(2, 1, 0.7));
  Graph g;
  g.backward(ad::sum(ad::mul(g.parameter(a), g.parameter(b))));
  EXPECT_EQ(a.grad.norm(), 0.0);
  EXPECT_DOUBLE_EQ(b.grad(0, 0), 0.3);
}

TEST(AutodiffGraph, NonFiniteValueIsReported) {
  Graph g;
  Var v = g.constant(Matrix::Constant(1, 1, 1e308));
  try {
    ad::scale(v, 1e10);
    FAIL() << "expected NumericalFault";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalFault);
  }
}

TEST(AutodiffGraph, SharedSubexpressionAccumulates) {
  Parameter a("a", Matrix::Constant(1, 1, 2.0));
  Graph g;
  Var x = g.parameter(a);
  g.backward(ad::sum(ad::mul(x, x)));  // d(x^2)/dx = 2x
  EXPECT_DOUBLE_EQ(a.grad(0, 0), 4.0);
}

TEST(AutodiffGraph, GradientsAccumulateAcrossGraphs) {
  Parameter a("a", Matrix::Constant(1, 1, 3.0));
  for (int k = 0; k < 2; ++k) {
    Graph g;
    g.backward(ad::sum(ad::scale(g.parameter(a), 2.0)));
  }
  EXPECT_DOUBLE_EQ(a.grad(0, 0), 4.0);
}

TEST(AutodiffGraph, UnreachedNodeHasEmptyGradient) {
  Parameter a("a", Matrix::Ones(1, 1));
  Graph g;
  Var x = g.parameter(a);
  Var unused = ad::scale(x, 3.0);
  g.backward(ad::sum(x));
  EXPECT_EQ(g.grad(unused).size(), 0);
}
