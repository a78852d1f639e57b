#include "mimae/optim.hpp"

#include <cmath>

namespace mimae {

AdamW::AdamW(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.requires_grad()) throw ContractError("adamw: parameter without requires_grad");
    m_.emplace_back(p.values().size(), 0.0f);
    v_.emplace_back(p.values().size(), 0.0f);
  }
}

void AdamW::step(float lr) {
  for (const Tensor& p : params_)
    if (!p.has_grad()) throw ContractError("adamw: gradient not populated for a parameter");
  ++t_;
  const float bc1 = 1.0f - std::pow(cfg_.beta1, float(t_));
  const float bc2 = 1.0f - std::pow(cfg_.beta2, float(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& pv = params_[i].mutable_values();
    const auto& g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < pv.size(); ++j) {
      pv[j] -= lr * cfg_.weight_decay * pv[j];
      m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

float cosine_lr(int64_t step, const LrSchedule& sched) {
  if (step < 0 || step > sched.total_steps)
    throw ContractError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(sched.total_steps) + "]");
  if (sched.warmup_steps > 0 && step < sched.warmup_steps)
    return sched.base_lr * float(step) / float(sched.warmup_steps);
  const int64_t decay_span = sched.total_steps - sched.warmup_steps;
  if (decay_span <= 0) return sched.base_lr;
  const double t = double(step - sched.warmup_steps) / double(decay_span);
  return sched.min_lr + 0.5f * (sched.base_lr - sched.min_lr) * float(1.0 + std::cos(M_PI * t));
}

}  // namespace mimae
