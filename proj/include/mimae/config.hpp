#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimae/masking.hpp"
#include "mimae/model.hpp"
#include "mimae/objectives.hpp"

namespace mimae {

enum class GateMode { latching, per_batch };

// Every tunable of the pipeline as documented `key = value` entries.
// Unknown keys are rejected; serialization round-trips losslessly.
struct RunConfig {
  // data
  std::string dataset_path = "data/synth.mimds";
  int num_images = 512;
  int image_size = 32;
  int channels = 1;
  int class_count = 4;
  uint64_t data_seed = 1;
  std::string idx_images;  // optional MNIST-style IDX import
  std::string idx_labels;

  // model
  int patch_size = 8;
  int embed_dim = 64;
  int encoder_depth = 4;
  int decoder_dim = 32;
  int decoder_depth = 2;
  int num_heads = 4;
  int latent_dim = 64;
  int approx_hidden_dim = 64;
  float sigma_floor = 1e-4f;
  LatentPooling latent_pooling = LatentPooling::class_token;
  bool norm_pix = false;

  // masking
  float mask_ratio = 0.75f;
  MaskCountMode mask_count_mode = MaskCountMode::complete;
  MaskStrategy mask_gen = MaskStrategy::orthogonal;

  // loss
  float lambda1 = 1.0f;
  float lambda2 = 1.0f;
  float lambda3 = 10.0f;
  float tau = 0.07f;
  float epsilon_l = 0.5f;
  GateMode gate_mode = GateMode::latching;
  bool gate_initial_open = false;

  // training
  int epochs = 50;
  int batch_size = 32;
  float base_lr = 1.5e-3f;
  float min_lr = 0.0f;
  float warmup_frac = 0.1f;
  float weight_decay = 0.05f;
  float beta1 = 0.9f;
  float beta2 = 0.95f;
  float adam_eps = 1e-8f;
  float approx_lr = 1e-3f;
  float approx_weight_decay = 0.0f;
  uint64_t seed = 0;
  std::string checkpoint_path;  // empty -> <out_dir>/checkpoint.mimae
  int checkpoint_every = 0;     // epochs between checkpoints; 0 = final only
  std::string metrics_path;     // empty -> <out_dir>/metrics.csv
  std::string resume_path;
  std::string out_dir = "out";

  // linear probe
  int probe_epochs = 50;
  float probe_lr = 0.1f;
  float probe_train_frac = 0.7f;
  uint64_t probe_seed = 123;
  int probe_batch = 128;

  // mutual-information bench
  std::string mi_rhos = "0.3,0.6,0.9";
  int mi_dim = 1;
  int mi_samples = 10000;
  int mi_batch = 128;
  float mi_tau = 0.1f;
  uint64_t mi_seed = 7;
  int mi_club_epochs = 150;
  int mi_nce_epochs = 30;
  int mi_hidden = 64;
  std::string mi_report_path;  // empty -> <out_dir>/mi_report.csv
  float mi_delta = 0.1f;

  // plots
  std::string plot_dir;  // empty -> <out_dir>/plots

  // derived views
  int masks_per_image() const { return mask_count(mask_ratio, mask_count_mode); }
  ModelConfig model_config() const;
  LossWeights loss_weights() const;
  std::string metrics_file() const;
  std::string checkpoint_file() const;
  std::string mi_report_file() const;
  std::string plots_dir() const;
  std::vector<float> mi_rho_list() const;

  // cross-field consistency (key ranges are enforced on assignment)
  void validate() const;
};

// Parses UTF-8 `key = value` lines; `#` starts a comment. Errors carry
// 1-based line numbers and the offending key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Applies one `key=value` override (CLI --set).
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical serialization: every key, fixed order, f32-lossless floats.
std::string serialize_config(const RunConfig& cfg);

// name/current-value/default/doc table for `--help-keys` style listings
struct ConfigKeyInfo {
  std::string key;
  std::string value;
  std::string doc;
};
std::vector<ConfigKeyInfo> config_keys(const RunConfig& cfg);

}  // namespace mimae
