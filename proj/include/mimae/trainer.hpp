#pragma once

#include <functional>
#include <memory>

#include "mimae/checkpoint.hpp"
#include "mimae/config.hpp"
#include "mimae/dataset.hpp"
#include "mimae/metrics.hpp"
#include "mimae/model.hpp"
#include "mimae/objectives.hpp"
#include "mimae/optim.hpp"

namespace mimae {

// Deterministic per-(seed, step, image-slot) mask derivation. Exposed so
// that reference evaluations outside the trainer can replay a step exactly.
MaskSet step_masks(uint64_t seed, int64_t global_step, int image_slot, int num_patches,
                   int num_masks, float ratio, MaskStrategy strategy);

// Pretraining loop: per step, N orthogonal masks per image, one encode and
// decode per mask, all four losses, and three routed updates --
// encoder <- grad(l1*rec + gate*(l2*max_mi + l3*min_mi)), decoder <-
// grad(l1*rec), approximation net <- grad(approx NLL).
class Trainer {
 public:
  Trainer(RunConfig cfg, const Dataset& data);

  void resume_from(const CheckpointData& ckpt);
  CheckpointData snapshot() const;

  LossReport train_step(const std::vector<int>& batch_indices);

  using EpochCallback = std::function<void(const EpochMetrics&)>;
  void run_pretrain(MetricsWriter* metrics, const EpochCallback& cb = {});

  const RunConfig& config() const { return cfg_; }
  const MaeModel& model() const { return *model_; }
  const ApproxNet& approx() const { return *approx_; }
  AdamW& main_optimizer() { return *opt_main_; }
  AdamW& approx_optimizer() { return *opt_approx_; }

  int64_t epoch() const { return epoch_; }
  int64_t global_step() const { return global_step_; }
  bool gate_open() const { return gate_open_; }
  int64_t gate_open_epoch() const { return gate_open_epoch_; }
  double data_mean() const { return mean_; }
  double data_std() const { return std_; }
  int steps_per_epoch() const;
  LrSchedule main_schedule() const { return sched_main_; }

 private:
  void update_gate_after_step(float rec);
  void update_gate_after_epoch(double epoch_mean);
  Tensor approx_input(const Tensor& target_patches, const std::vector<std::vector<int>>& masked_idx) const;

  RunConfig cfg_;
  const Dataset* data_;
  double mean_ = 0.0, std_ = 1.0;
  std::unique_ptr<MaeModel> model_;
  std::unique_ptr<ApproxNet> approx_;
  std::unique_ptr<AdamW> opt_main_;
  std::unique_ptr<AdamW> opt_approx_;
  LrSchedule sched_main_, sched_approx_;

  int64_t epoch_ = 0;
  int64_t global_step_ = 0;
  bool gate_open_ = false;
  int64_t gate_open_epoch_ = -1;
  double running_rec_sum_ = 0.0;
  int64_t running_rec_count_ = 0;
};

struct ProbeResult {
  double accuracy = 0.0;
  int train_count = 0;
  int test_count = 0;
};

// Trains a linear classifier on frozen class-token features of unmasked
// images (plain SGD with cosine decay) and scores a held-out split.
ProbeResult linear_probe(const MaeModel& model, const Dataset& data, const RunConfig& cfg);

// Probe on externally supplied feature rows (used for calibration tests).
ProbeResult linear_probe_features(const std::vector<std::vector<float>>& features,
                                  const std::vector<uint16_t>& labels, int class_count,
                                  const RunConfig& cfg);

}  // namespace mimae
