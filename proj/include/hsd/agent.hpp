#pragma once

// Neighbor-selection agent: a two-layer scorer applied to every row of the
// state, softmaxed into a distribution over candidates, trained by REINFORCE.

#include <hsd/branches.hpp>
#include <hsd/optim.hpp>

#include <random>
#include <vector>

namespace hsd {

inline constexpr int kPolicyHidden = 128;

struct PolicyParams {
  nn::Linear layer1;  // 448 -> 128, tanh
  nn::Linear layer2;  // 128 -> 1

  std::vector<Parameter*> parameters();
};

PolicyParams make_policy(nn::Rng& rng);

/// log pi(. | state) as an n x 1 node.
Var policy_log_probs(Graph& g, PolicyParams& p, const Matrix& state);
/// pi(. | state), graph-free.
Vector policy_forward(const PolicyParams& p, const Matrix& state);

struct Action {
  int index = 0;
  Scalar log_prob = 0;
  bool explored = false;
};

/// Uniform choice with probability epsilon, otherwise argmax. The log-prob
/// is that of the chosen index under `probs` either way.
Action select_action(const Vector& probs, Scalar epsilon, nn::Rng& rng);

/// Uniform choice, used by the random-selection ablation.
Action random_action(const Vector& probs, nn::Rng& rng);

/// q = e(prior) - e(final); alpha*q if the prior is wrong, else q if the
/// final prediction is wrong, else 0. Correctness is by argmax.
Scalar compute_reward(const Vector& prior, const Vector& final, int label, Scalar alpha);

struct EpisodeStep {
  Matrix state;  // state the action was chosen from
  Action action;
  Vector prediction;
};

struct EpisodeTrace {
  std::vector<EpisodeStep> steps;
  Vector prior;
  Vector final;
  int label = 0;
};

/// -sum_i v * log pi(a_i | s_i) on a fresh graph; gradients accumulate into `p`.
Scalar reinforce_backward(const EpisodeTrace& trace, Scalar reward, PolicyParams& p);

/// One optimizer step on the REINFORCE objective. Leaves the policy untouched
/// when the reward is zero.
void reinforce_update(const EpisodeTrace& trace, Scalar reward, PolicyParams& p, optim::Adam& optimizer,
                      Scalar clip_norm = optim::kDefaultClipNorm);

}  // namespace hsd
