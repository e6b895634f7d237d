#include <hsd/optim.hpp>

#include <cmath>

namespace hsd::optim {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    if (p->grad.size() == 0) p->zero_grad();
  }
}

void Adam::step() {
  ++t_;
  const Scalar c1 = 1.0 - std::pow(config_.beta1, Scalar(t_));
  const Scalar c2 = 1.0 - std::pow(config_.beta2, Scalar(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.trainable) continue;
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.eps);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

Scalar global_grad_norm(const std::vector<Parameter*>& params) {
  Scalar sq = 0;
  for (const Parameter* p : params) {
    if (p->trainable && p->grad.size() > 0) sq += p->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

Scalar clip_global_norm(const std::vector<Parameter*>& params, Scalar max_norm) {
  const Scalar norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const Scalar k = max_norm / norm;
    for (Parameter* p : params) {
      if (p->trainable && p->grad.size() > 0) p->grad *= k;
    }
  }
  return norm;
}

}  // namespace hsd::optim
