#include "mimae/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "mimae/ops.hpp"
#include "mimae/rng.hpp"

namespace mimae {

namespace {

constexpr uint64_t kMaskStream = 0x6d61736bull;
constexpr uint64_t kEpochStream = 0x65706f63ull;
constexpr uint64_t kApproxStream = 1;

std::vector<TensorEntry> entries_from(const std::vector<std::pair<std::string, Tensor>>& named,
                                      const std::string& prefix) {
  std::vector<TensorEntry> out;
  for (const auto& [name, t] : named) out.push_back({prefix + name, t.shape(), t.values()});
  return out;
}

}  // namespace

MaskSet step_masks(uint64_t seed, int64_t global_step, int image_slot, int num_patches,
                   int num_masks, float ratio, MaskStrategy strategy) {
  const uint64_t s = mix64(mix64(seed, kMaskStream), uint64_t(global_step), uint64_t(image_slot));
  if (strategy == MaskStrategy::orthogonal) return gen_orthogonal(num_patches, num_masks, s);
  return gen_independent(num_patches, ratio, num_masks, s);
}

Trainer::Trainer(RunConfig cfg, const Dataset& data) : cfg_(std::move(cfg)), data_(&data) {
  cfg_.validate();
  if (data.count < 1) throw ContractError("trainer: dataset is empty");
  mean_ = data.pixel_mean();
  std_ = data.pixel_std();

  model_ = std::make_unique<MaeModel>(cfg_.model_config(), cfg_.seed);
  approx_ = std::make_unique<ApproxNet>(cfg_.model_config().input_dim(), cfg_.approx_hidden_dim,
                                        cfg_.latent_dim, cfg_.sigma_floor, mix64(cfg_.seed, kApproxStream));

  AdamConfig main_cfg{cfg_.base_lr, cfg_.beta1, cfg_.beta2, cfg_.weight_decay, cfg_.adam_eps};
  AdamConfig approx_cfg{cfg_.approx_lr, cfg_.beta1, cfg_.beta2, cfg_.approx_weight_decay, cfg_.adam_eps};
  opt_main_ = std::make_unique<AdamW>(model_->params(), main_cfg);
  opt_approx_ = std::make_unique<AdamW>(approx_->params(), approx_cfg);

  const int64_t total = int64_t(cfg_.epochs) * steps_per_epoch();
  sched_main_ = {cfg_.base_lr, int64_t(std::llround(double(cfg_.warmup_frac) * double(total))), total,
                 cfg_.min_lr};
  sched_approx_ = {cfg_.approx_lr, sched_main_.warmup_steps, total, 0.0f};
  gate_open_ = cfg_.gate_initial_open;
  if (gate_open_) gate_open_epoch_ = 0;
}

int Trainer::steps_per_epoch() const {
  return int((int64_t(data_->count) + cfg_.batch_size - 1) / cfg_.batch_size);
}

Tensor Trainer::approx_input(const Tensor& target_patches,
                             const std::vector<std::vector<int>>& masked_idx) const {
  const int B = target_patches.dim(0), P = target_patches.dim(1), D = target_patches.dim(2);
  std::vector<float> flat(target_patches.values());
  for (int b = 0; b < B; ++b)
    for (int p : masked_idx[size_t(b)])
      std::fill_n(flat.begin() + (int64_t(b) * P + p) * D, D, 0.0f);
  return Tensor::from_values({B, P * D}, std::move(flat));
}

LossReport Trainer::train_step(const std::vector<int>& batch_indices) {
  if (batch_indices.empty()) throw ContractError("train_step: empty batch");
  const int B = int(batch_indices.size());
  const ModelConfig mc = cfg_.model_config();
  const int P = mc.num_patches();
  const int N = cfg_.masks_per_image();
  const LossWeights weights = cfg_.loss_weights();

  Tensor images = data_->batch(batch_indices, mean_, std_);
  Tensor target = patchify(images, mc);
  Tensor tokens_full = model_->patch_embed(images);

  std::vector<MaskSet> mask_sets;
  mask_sets.reserve(size_t(B));
  for (int b = 0; b < B; ++b)
    mask_sets.push_back(step_masks(cfg_.seed, global_step_, b, P, N, cfg_.mask_ratio, cfg_.mask_gen));

  Tensor rec_sum;
  std::vector<Tensor> latents;
  std::vector<GaussianPosterior> posts_live, posts_detached;
  std::vector<Tensor> latents_detached;
  for (int j = 0; j < N; ++j) {
    std::vector<std::vector<int>> vis_idx(static_cast<size_t>(B));
    std::vector<std::vector<int>> msk_idx(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      vis_idx[size_t(b)] = mask_sets[size_t(b)].visible_indices(j);
      msk_idx[size_t(b)] = mask_sets[size_t(b)].masked_indices(j);
    }
    LatentBatch lat = model_->encode(gather_patches(tokens_full, vis_idx), j);
    Tensor pred = model_->decode(lat, vis_idx);
    Tensor rec_j = rec_loss(pred, target, msk_idx, cfg_.norm_pix);
    rec_sum = rec_sum.defined() ? add(rec_sum, rec_j) : rec_j;

    GaussianPosterior post = approx_->forward(approx_input(target, msk_idx));
    posts_live.push_back(post);
    posts_detached.push_back({post.mu.detach(), post.sigma.detach()});
    latents.push_back(lat.z_vec);
    latents_detached.push_back(lat.z_vec.detach());
  }

  Tensor rec = scale(rec_sum, 1.0f / float(N));
  Tensor max_mi = max_mi_loss(latents, weights.tau);
  Tensor min_mi = min_mi_loss(posts_detached, latents, cfg_.sigma_floor);
  Tensor apx = approx_loss(posts_live, latents_detached, cfg_.sigma_floor);

  const bool gate = gate_open_;
  Tensor total = combined_total(rec, max_mi, min_mi, weights, gate);

  opt_main_->zero_grad();
  opt_approx_->zero_grad();
  backward(total);
  backward(apx);
  // with lambda1 = 0 the decoder never enters the graph; its update is a
  // zero-gradient AdamW step (weight decay still applies)
  for (const Tensor& p : opt_main_->params())
    const_cast<Tensor&>(p).materialize_grad();
  for (const Tensor& p : opt_approx_->params())
    const_cast<Tensor&>(p).materialize_grad();

  opt_main_->step(cosine_lr(global_step_, sched_main_));
  opt_approx_->step(cosine_lr(global_step_, sched_approx_));
  ++global_step_;

  LossReport report =
      combined_loss(rec.item(), max_mi.item(), min_mi.item(), apx.item(), weights, gate);
  update_gate_after_step(report.rec);
  return report;
}

void Trainer::update_gate_after_step(float rec) {
  running_rec_sum_ += double(rec);
  running_rec_count_ += 1;
  if (cfg_.gate_mode == GateMode::per_batch)
    gate_open_ = (running_rec_sum_ / double(running_rec_count_)) < double(cfg_.epsilon_l);
}

void Trainer::update_gate_after_epoch(double epoch_mean) {
  if (cfg_.gate_mode == GateMode::latching && !gate_open_ && epoch_mean < double(cfg_.epsilon_l)) {
    gate_open_ = true;
    gate_open_epoch_ = epoch_ + 1;  // first epoch that runs gated-open
  }
  running_rec_sum_ = 0.0;
  running_rec_count_ = 0;
}

void Trainer::run_pretrain(MetricsWriter* metrics, const EpochCallback& cb) {
  if (data_->count < cfg_.batch_size)
    throw ContractError("run_pretrain: dataset smaller than one batch");
  const int spe = steps_per_epoch();
  for (int64_t e = epoch_; e < cfg_.epochs; ++e) {
    std::vector<int> order = data_->shuffled_indices(mix64(cfg_.seed, kEpochStream, uint64_t(e)));
    double sum_rec = 0, sum_max = 0, sum_min = 0, sum_apx = 0;
    bool gate_last = gate_open_;
    float lr_last = 0.0f;
    for (int s = 0; s < spe; ++s) {
      const size_t lo = size_t(s) * size_t(cfg_.batch_size);
      const size_t hi = std::min(order.size(), lo + size_t(cfg_.batch_size));
      if (lo >= hi) break;
      std::vector<int> batch(order.begin() + int64_t(lo), order.begin() + int64_t(hi));
      lr_last = cosine_lr(global_step_, sched_main_);
      LossReport r;
      try {
        r = train_step(batch);
      } catch (const NumericError& err) {
        const std::string diag = cfg_.checkpoint_file() + ".diag";
        try {
          save_checkpoint(diag, snapshot());
        } catch (const Error&) {
          // diagnostics are best effort; the original fault wins
        }
        throw Error("train_step diverged at epoch " + std::to_string(epoch_ + 1) + " step " +
                    std::to_string(global_step_) + " (" + err.what() + "); diagnostic snapshot at " + diag);
      }
      sum_rec += r.rec;
      sum_max += r.max_mi;
      sum_min += r.min_mi;
      sum_apx += r.approx;
      gate_last = r.gate_open;
    }
    const double inv = 1.0 / double(spe);
    EpochMetrics row;
    row.epoch = e + 1;
    row.step = global_step_;
    row.lr = lr_last;
    row.rec = float(sum_rec * inv);
    row.max_mi = float(sum_max * inv);
    row.min_mi = float(sum_min * inv);
    row.approx = float(sum_apx * inv);
    row.gate_open = gate_last;
    if (metrics) metrics->write_row(row);
    if (cb) cb(row);

    epoch_ = e + 1;
    update_gate_after_epoch(sum_rec * inv);

    const bool cadence = cfg_.checkpoint_every > 0 && (epoch_ % cfg_.checkpoint_every == 0);
    if (cadence || epoch_ == cfg_.epochs) save_checkpoint(cfg_.checkpoint_file(), snapshot());
  }
}

CheckpointData Trainer::snapshot() const {
  CheckpointData d;
  d.config_text = serialize_config(cfg_);
  auto model_named = model_->named_params();
  auto approx_named = approx_->named_params();
  auto append = [&d](std::vector<TensorEntry> v) {
    for (auto& e : v) d.tensors.push_back(std::move(e));
  };
  append(entries_from(model_named, "param."));
  append(entries_from(approx_named, "param."));
  for (size_t i = 0; i < model_named.size(); ++i) {
    d.tensors.push_back({"optm.main." + model_named[i].first, model_named[i].second.shape(),
                         opt_main_->first_moment(i)});
    d.tensors.push_back({"optv.main." + model_named[i].first, model_named[i].second.shape(),
                         opt_main_->second_moment(i)});
  }
  for (size_t i = 0; i < approx_named.size(); ++i) {
    d.tensors.push_back({"optm.approx." + approx_named[i].first, approx_named[i].second.shape(),
                         opt_approx_->first_moment(i)});
    d.tensors.push_back({"optv.approx." + approx_named[i].first, approx_named[i].second.shape(),
                         opt_approx_->second_moment(i)});
  }
  d.epoch = epoch_;
  d.global_step = global_step_;
  d.gate_open = gate_open_ ? 1 : 0;
  d.gate_open_epoch = gate_open_epoch_;
  d.running_rec_sum = running_rec_sum_;
  d.running_rec_count = running_rec_count_;
  d.opt_main_t = opt_main_->step_count();
  d.opt_approx_t = opt_approx_->step_count();
  d.rng_state = std::to_string(cfg_.seed);  // all streams derive from seed + counters
  return d;
}

void Trainer::resume_from(const CheckpointData& ckpt) {
  auto restore_group = [&](const std::vector<std::pair<std::string, Tensor>>& named, AdamW& opt,
                           const std::string& opt_tag) {
    for (size_t i = 0; i < named.size(); ++i) {
      const auto& [name, tensor] = named[i];
      const TensorEntry* p = ckpt.find("param." + name);
      if (!p) throw FormatError("checkpoint: missing tensor 'param." + name + "'");
      if (p->shape != tensor.shape())
        throw FormatError("checkpoint: tensor 'param." + name + "' has shape " + shape_str(p->shape) +
                          ", expected " + shape_str(tensor.shape()));
      const_cast<Tensor&>(tensor).mutable_values() = p->values;
      const TensorEntry* m = ckpt.find("optm." + opt_tag + "." + name);
      const TensorEntry* v = ckpt.find("optv." + opt_tag + "." + name);
      if (!m || !v) throw FormatError("checkpoint: missing optimizer moments for '" + name + "'");
      opt.first_moment(i) = m->values;
      opt.second_moment(i) = v->values;
    }
  };
  restore_group(model_->named_params(), *opt_main_, "main");
  restore_group(approx_->named_params(), *opt_approx_, "approx");
  opt_main_->set_step_count(ckpt.opt_main_t);
  opt_approx_->set_step_count(ckpt.opt_approx_t);
  epoch_ = ckpt.epoch;
  global_step_ = ckpt.global_step;
  gate_open_ = ckpt.gate_open != 0;
  gate_open_epoch_ = ckpt.gate_open_epoch;
  running_rec_sum_ = ckpt.running_rec_sum;
  running_rec_count_ = ckpt.running_rec_count;
}

namespace {

struct FeatureMatrix {
  std::vector<std::vector<float>> rows;
  std::vector<uint16_t> labels;
};

FeatureMatrix extract_features(const MaeModel& model, const Dataset& data, const RunConfig& cfg) {
  FeatureMatrix f;
  const double mean = data.pixel_mean(), stddev = data.pixel_std();
  for (int lo = 0; lo < data.count; lo += cfg.probe_batch) {
    const int hi = std::min(data.count, lo + cfg.probe_batch);
    std::vector<int> idx;
    for (int i = lo; i < hi; ++i) idx.push_back(i);
    Tensor tokens = model.patch_embed(data.batch(idx, mean, stddev));
    LatentBatch lat = model.encode(tokens);  // all patches visible
    const auto& z = lat.z_vec.values();
    const int L = lat.z_vec.dim(1);
    for (int b = 0; b < hi - lo; ++b) {
      f.rows.emplace_back(z.begin() + int64_t(b) * L, z.begin() + int64_t(b + 1) * L);
      f.labels.push_back(data.labels[size_t(lo + b)]);
    }
  }
  return f;
}

}  // namespace

ProbeResult linear_probe_features(const std::vector<std::vector<float>>& features,
                                  const std::vector<uint16_t>& labels, int class_count,
                                  const RunConfig& cfg) {
  const int n = int(features.size());
  if (n < 4) throw ContractError("linear_probe: need at least 4 samples");
  if (labels.size() != features.size()) throw ContractError("linear_probe: label count mismatch");
  const int L = int(features[0].size());
  const int C = class_count;
  if (C < 2) throw ContractError("linear_probe: single-class dataset");

  Rng rng(mix64(cfg.probe_seed, 0x70726f62ull));
  std::vector<int> perm = rng.permutation(n);
  const int train_n = std::max(1, std::min(n - 1, int(std::lround(double(cfg.probe_train_frac) * n))));

  std::vector<int> train_idx(perm.begin(), perm.begin() + train_n);
  std::vector<int> test_idx(perm.begin() + train_n, perm.end());
  {
    int distinct = 0;
    std::vector<int> seen(size_t(C), 0);
    for (int i : train_idx)
      if (labels[size_t(i)] < uint16_t(C) && !seen[labels[size_t(i)]]++) ++distinct;
    if (distinct < 2) throw ContractError("linear_probe: train split has a single class");
  }

  Tensor w = Tensor::param({L, C}, std::vector<float>(size_t(L) * C, 0.0f));
  Tensor b = Tensor::param({C}, std::vector<float>(size_t(C), 0.0f));

  const int steps_per_epoch = (train_n + cfg.probe_batch - 1) / cfg.probe_batch;
  const LrSchedule sched{cfg.probe_lr, 0, int64_t(cfg.probe_epochs) * steps_per_epoch, 0.0f};
  int64_t step = 0;
  for (int e = 0; e < cfg.probe_epochs; ++e) {
    Rng erng(mix64(cfg.probe_seed, 0x65ull, uint64_t(e)));
    std::vector<int> order = train_idx;
    erng.shuffle(order);
    for (int lo = 0; lo < train_n; lo += cfg.probe_batch) {
      const int hi = std::min(train_n, lo + cfg.probe_batch);
      const int Bt = hi - lo;
      std::vector<float> x(size_t(Bt) * L);
      std::vector<float> onehot(size_t(Bt) * C, 0.0f);
      for (int r = 0; r < Bt; ++r) {
        const int i = order[size_t(lo + r)];
        std::copy(features[size_t(i)].begin(), features[size_t(i)].end(), x.begin() + int64_t(r) * L);
        onehot[size_t(int64_t(r) * C + labels[size_t(i)])] = 1.0f;
      }
      Tensor xb = Tensor::from_values({Bt, L}, std::move(x));
      Tensor logits = add_rowvec(matmul(xb, w), b);
      Tensor picked = row_sum(mul(logits, Tensor::from_values({Bt, C}, std::move(onehot))));
      Tensor loss = mean_all(sub(logsumexp_rows(logits), picked));
      w.zero_grad();
      b.zero_grad();
      backward(loss);
      const float lr = cosine_lr(step, sched);
      auto& wv = w.mutable_values();
      const auto wg = w.grad_or_zeros();
      for (size_t i = 0; i < wv.size(); ++i) wv[i] -= lr * wg[i];
      auto& bv = b.mutable_values();
      const auto bg = b.grad_or_zeros();
      for (size_t i = 0; i < bv.size(); ++i) bv[i] -= lr * bg[i];
      ++step;
    }
  }

  int correct = 0;
  for (int i : test_idx) {
    const auto& wv = w.values();
    const auto& bv = b.values();
    int best = 0;
    double best_v = -1e300;
    for (int c = 0; c < C; ++c) {
      double v = bv[size_t(c)];
      for (int d = 0; d < L; ++d) v += double(features[size_t(i)][size_t(d)]) * wv[size_t(int64_t(d) * C + c)];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    if (best == int(labels[size_t(i)])) ++correct;
  }
  ProbeResult res;
  res.train_count = train_n;
  res.test_count = int(test_idx.size());
  res.accuracy = res.test_count ? double(correct) / res.test_count : 0.0;
  return res;
}

ProbeResult linear_probe(const MaeModel& model, const Dataset& data, const RunConfig& cfg) {
  if (data.label_count < 2) throw ContractError("linear_probe: single-class dataset");
  FeatureMatrix f = extract_features(model, data, cfg);
  return linear_probe_features(f.rows, f.labels, data.label_count, cfg);
}

}  // namespace mimae
