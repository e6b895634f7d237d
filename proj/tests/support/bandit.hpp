#pragma once
// One-good-neighbor decision problem: ten candidates per episode, one of which
// corrects a wrong prior prediction while every other choice makes it slightly
// worse. The good candidate carries a fixed signature in its pool-encoding
// slice and sits at a random position.

#include <hsd/agent.hpp>
#include <hsd/branches.hpp>
#include <hsd/optim.hpp>

#include <random>

namespace hsd::testing {

struct BanditResult {
  double good_probability = 0;  // mean pi(good) over fresh evaluation states
  int good_choices = 0;
};

class OneGoodNeighbor {
 public:
  static constexpr int kCandidates = 10;

  explicit OneGoodNeighbor(std::uint64_t seed) : rng_(seed) {
    std::uniform_real_distribution<double> u(-1, 1);
    signature_.resize(nn::kEncodingDim);
    for (auto& v : signature_) v = u(rng_);
  }

  /// Fresh state matrix; returns the good row.
  int draw(Matrix& state) {
    std::uniform_real_distribution<double> u(-1, 1);
    state.resize(kCandidates, kStateWidth);
    for (Eigen::Index k = 0; k < state.size(); ++k) state.data()[k] = u(rng_);
    std::uniform_int_distribution<int> pick(0, kCandidates - 1);
    const int good = pick(rng_);
    for (Eigen::Index d = 0; d < nn::kEncodingDim; ++d) {
      state(good, nn::kEncodingDim + d) = signature_[static_cast<std::size_t>(d)];
    }
    return good;
  }

  static constexpr int kLabel = 1;
  static Vector prior() { return (Vector(2) << 0.6, 0.4).finished(); }
  static Vector outcome(bool good) { return good ? (Vector(2) << 0.2, 0.8).finished() : (Vector(2) << 0.7, 0.3).finished(); }

 private:
  std::mt19937_64 rng_;
  std::vector<double> signature_;
};

inline BanditResult run_bandit(std::uint64_t seed, int episodes = 500, double epsilon = 0.1, double alpha = 2.0) {
  nn::Rng rng(seed);
  PolicyParams policy = make_policy(rng);
  optim::Adam adam(policy.parameters(), {1e-3});
  OneGoodNeighbor env(seed + 1);
  BanditResult out;
  Matrix state;
  for (int e = 0; e < episodes; ++e) {
    const int good = env.draw(state);
    const Action a = select_action(policy_forward(policy, state), epsilon, rng);
    EpisodeTrace trace;
    trace.label = OneGoodNeighbor::kLabel;
    trace.prior = OneGoodNeighbor::prior();
    trace.final = OneGoodNeighbor::outcome(a.index == good);
    trace.steps.push_back({state, a, trace.final});
    out.good_choices += a.index == good;
    reinforce_update(trace, compute_reward(trace.prior, trace.final, trace.label, alpha), policy, adam);
  }
  constexpr int kEval = 200;
  for (int e = 0; e < kEval; ++e) {
    const int good = env.draw(state);
    out.good_probability += policy_forward(policy, state)(good) / kEval;
  }
  return out;
}

}  // namespace hsd::testing
