#pragma once

#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.95f;
  float weight_decay = 0.0f;
  float eps = 1e-8f;
};

// AdamW over a fixed parameter list. Decoupled weight decay is applied to
// the parameter before the moment update.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamConfig cfg);

  // One update using the gradients currently populated on the parameters.
  // Parameters whose gradients were never materialized are a contract error.
  void step(float lr);
  void step() { step(cfg_.lr); }

  void zero_grad();

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

  // moment access for persistence
  std::vector<float>& first_moment(size_t i) { return m_[i]; }
  std::vector<float>& second_moment(size_t i) { return v_[i]; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t t_ = 0;
  AdamConfig cfg_;
};

struct LrSchedule {
  float base_lr = 1e-3f;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;
  float min_lr = 0.0f;
};

// Linear warmup from 0 to base_lr, then cosine decay to min_lr.
float cosine_lr(int64_t step, const LrSchedule& sched);

}  // namespace mimae
