#pragma once

#include <hsd/autodiff.hpp>

#include <vector>

namespace hsd::optim {

using ad::Parameter;

struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Adam with bias correction. Frozen parameters are skipped.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  void step();
  void zero_grad();

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(Scalar lr) { config_.lr = lr; }
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamConfig config_;
  long t_ = 0;
};

Scalar global_grad_norm(const std::vector<Parameter*>& params);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
Scalar clip_global_norm(const std::vector<Parameter*>& params, Scalar max_norm);

inline constexpr Scalar kDefaultClipNorm = 5.0;

}  // namespace hsd::optim
