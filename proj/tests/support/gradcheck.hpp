#pragma once
// Central finite differences against the tape's gradients.

#include <hsd/autodiff.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace hsd::testing {

struct GradCheck {
  double max_rel_error = 0;
  std::string worst;
  int checked = 0;
};

// Gradients smaller than this in magnitude are compared absolutely against
// kAbsFloor, the round-off floor of a step-1e-5 central difference on O(1)
// losses; everything else is compared relatively.
inline constexpr double kTinyGradient = 1e-6;
inline constexpr double kAbsFloor = 1e-9;

/// `loss` builds a fresh graph and returns the 1x1 root. Up to `per_tensor`
/// coefficients of each parameter are probed (all of them when smaller).
inline GradCheck check_gradients(const std::vector<ad::Parameter*>& params,
                                 const std::function<ad::Var(ad::Graph&)>& loss, std::uint64_t seed,
                                 int per_tensor = 12, double h = 1e-5) {
  for (ad::Parameter* p : params) p->zero_grad();
  {
    ad::Graph g;
    g.backward(loss(g));
  }
  auto eval = [&] {
    ad::Graph g;
    return loss(g).scalar();
  };
  std::mt19937_64 rng(seed);
  GradCheck out;
  for (ad::Parameter* p : params) {
    if (!p->trainable) continue;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p->value.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<Eigen::Index>(k);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(per_tensor)));
    for (Eigen::Index k : idx) {
      double& w = p->value.data()[k];
      const double saved = w;
      w = saved + h;
      const double up = eval();
      w = saved - h;
      const double down = eval();
      w = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.data()[k];
      const double diff = std::fabs(numeric - analytic);
      const double scale = std::max(std::fabs(numeric), std::fabs(analytic));
      const double rel = scale < kTinyGradient ? (diff < kAbsFloor ? 0.0 : diff / kTinyGradient) : diff / scale;
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = p->name + "[" + std::to_string(k) + "] analytic=" + std::to_string(analytic) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace hsd::testing
