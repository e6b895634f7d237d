#include <hsd/agent.hpp>
#include <hsd/errors.hpp>

namespace hsd {

std::vector<Parameter*> PolicyParams::parameters() {
  auto out = layer1.parameters();
  for (Parameter* p : layer2.parameters()) out.push_back(p);
  return out;
}

PolicyParams make_policy(nn::Rng& rng) {
  return {nn::make_linear("policy.layer1", kStateWidth, kPolicyHidden, rng),
          nn::make_linear("policy.layer2", kPolicyHidden, 1, rng)};
}

Var policy_log_probs(Graph& g, PolicyParams& p, const Matrix& state) {
  if (state.cols() != p.layer1.in_dim()) throw Error(ErrorCode::ShapeMismatch, "policy: state width");
  Var s = g.constant(state.transpose());
  Var hidden = ad::tanh(ad::add_broadcast(ad::matmul(g.parameter(p.layer1.weight), s), g.parameter(p.layer1.bias)));
  Var scores = ad::add_broadcast(ad::matmul(g.parameter(p.layer2.weight), hidden), g.parameter(p.layer2.bias));
  return ad::log_softmax(scores);
}

Vector policy_forward(const PolicyParams& p, const Matrix& state) {
  if (state.cols() != p.layer1.in_dim()) throw Error(ErrorCode::ShapeMismatch, "policy: state width");
  Matrix hidden = p.layer1.weight.value * state.transpose();
  hidden.colwise() += p.layer1.bias.value.col(0);
  Matrix scores = p.layer2.weight.value * hsd::tanh(hidden);
  scores.array() += p.layer2.bias.value(0, 0);
  return hsd::softmax(scores).transpose();
}

Action select_action(const Vector& probs, Scalar epsilon, nn::Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorCode::InvalidArgument, "epsilon outside [0, 1]");
  if (probs.size() == 0) throw Error(ErrorCode::InvalidArgument, "no actions to choose from");
  Action a;
  if (epsilon > 0.0 && std::uniform_real_distribution<Scalar>(0.0, 1.0)(rng) < epsilon) {
    a.index = std::uniform_int_distribution<int>(0, static_cast<int>(probs.size()) - 1)(rng);
    a.explored = true;
  } else {
    a.index = argmax(probs);
  }
  a.log_prob = std::log(probs(a.index));
  return a;
}

Action random_action(const Vector& probs, nn::Rng& rng) {
  if (probs.size() == 0) throw Error(ErrorCode::InvalidArgument, "no actions to choose from");
  Action a;
  a.index = std::uniform_int_distribution<int>(0, static_cast<int>(probs.size()) - 1)(rng);
  a.log_prob = std::log(probs(a.index));
  a.explored = true;
  return a;
}

Scalar compute_reward(const Vector& prior, const Vector& final, int label, Scalar alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be positive");
  const Scalar q = cross_entropy(prior, label) - cross_entropy(final, label);
  if (argmax(prior) != label) return alpha * q;
  if (argmax(final) != label) return q;
  return 0.0;
}

Scalar reinforce_backward(const EpisodeTrace& trace, Scalar reward, PolicyParams& p) {
  Graph g;
  std::vector<Var> terms;
  terms.reserve(trace.steps.size());
  for (const EpisodeStep& step : trace.steps) {
    terms.push_back(ad::pick(policy_log_probs(g, p, step.state), step.action.index));
  }
  if (terms.empty()) return 0.0;
  Var objective = ad::scale(ad::sum_all(terms), -reward);
  g.backward(objective);
  return objective.scalar();
}

void reinforce_update(const EpisodeTrace& trace, Scalar reward, PolicyParams& p, optim::Adam& optimizer,
                      Scalar clip_norm) {
  if (reward == 0.0 || trace.steps.empty()) return;
  optimizer.zero_grad();
  reinforce_backward(trace, reward, p);
  optim::clip_global_norm(optimizer.parameters(), clip_norm);
  optimizer.step();
}

}  // namespace hsd
