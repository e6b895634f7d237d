#pragma once

// Dense element-wise helpers shared by the differentiable graph and the
// graph-free inference paths. All of them accept arbitrary Eigen expressions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace hsd {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Both go through Eigen's packet exp so the gate nonlinearities vectorize.
template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

// 1 - 2/(1 + e^{2x}) saturates cleanly to +-1 when the exponential overflows.
template <typename Derived>
auto tanh(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return (S(1) - S(2) / (S(1) + (S(2) * x.array()).exp())).matrix();
}

/// Softmax over all coefficients, stabilised by subtracting the maximum.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>
softmax(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const S shift = x.maxCoeff();
  auto e = (x.array() - shift).exp().eval();
  return (e / e.sum()).matrix();
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>
log_softmax(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const S shift = x.maxCoeff();
  const S lse = shift + std::log((x.array() - shift).exp().sum());
  return (x.array() - lse).matrix();
}

inline constexpr Scalar kProbClampLow = 1e-7;
inline constexpr Scalar kProbClampHigh = 1.0 - 1e-7;

template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& dist, int label) {
  using S = typename Derived::Scalar;
  const S p = std::clamp<S>(dist(label), S(kProbClampLow), S(kProbClampHigh));
  return -std::log(p);
}

template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& x) {
  Eigen::Index idx = 0;
  x.maxCoeff(&idx);
  return static_cast<int>(idx);
}

}  // namespace hsd
