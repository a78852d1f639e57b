#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

enum class LatentPooling { class_token, mean_pool };

struct ModelConfig {
  int image_size = 32;
  int channels = 1;
  int patch_size = 8;
  int embed_dim = 64;
  int encoder_depth = 4;
  int decoder_dim = 32;
  int decoder_depth = 2;
  int num_heads = 4;
  int latent_dim = 64;        // dimension of the pooled latent z
  int approx_hidden_dim = 64;
  float sigma_floor = 1e-4f;
  float ln_eps = 1e-6f;
  LatentPooling pooling = LatentPooling::class_token;

  void validate() const;
  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int input_dim() const { return image_size * image_size * channels; }
};

// Per-mask encoder output: full token sequence (class token first) plus the
// pooled latent vector consumed by both MI losses.
struct LatentBatch {
  Tensor tokens;  // [B, V+1, embed_dim]
  Tensor z_vec;   // [B, latent_dim]
  int mask_id = -1;
};

// Diagonal Gaussian q(z|x); sigma is a standard deviation, floored at
// sigma_floor elementwise.
struct GaussianPosterior {
  Tensor mu;     // [B, latent_dim]
  Tensor sigma;  // [B, latent_dim]
};

// Per-sample log density of z under the posterior: [B].
Tensor gaussian_log_prob(const GaussianPosterior& post, const Tensor& z, float sigma_floor);

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
  Tensor apply(const Tensor& x) const;  // rank 2 or 3 input
};

struct TransformerBlock {
  Tensor ln1_g, ln1_b;
  Linear wq, wk, wv, wo;
  Tensor ln2_g, ln2_b;
  Linear mlp1, mlp2;

  Tensor apply(const Tensor& x, int heads, float ln_eps) const;
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const;
};

// [B,C,H,W] raw pixels -> [B,P,patch_dim] rows, grid row-major, channel-major
// within a patch. Pure data movement; no gradient path.
Tensor patchify(const Tensor& images, const ModelConfig& cfg);

// Fixed sinusoidal table, one row per position.
std::vector<float> sinusoidal_table(int positions, int dim);

// The tiny masked autoencoder: patch embed -> ViT encoder -> decoder ->
// pixel projector.
class MaeModel {
 public:
  MaeModel(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // [B,C,H,W] -> [B,P,embed_dim]; per-patch projection + position embedding.
  Tensor patch_embed(const Tensor& images) const;

  // Prepends the class token, runs the encoder stack and final norm.
  LatentBatch encode(const Tensor& visible_tokens, int mask_id = -1) const;

  // Scatters visible tokens back to their patch slots, fills the rest with
  // the mask token, runs the decoder and the pixel projector.
  Tensor decode(const LatentBatch& latent, const std::vector<std::vector<int>>& visible_idx) const;
  Tensor decode(const LatentBatch& latent, const std::vector<int>& visible_idx, int batch) const;

  std::vector<Tensor> encoder_params() const;
  std::vector<Tensor> decoder_params() const;
  std::vector<Tensor> params() const;  // encoder then decoder
  std::vector<std::pair<std::string, Tensor>> named_params() const;

 private:
  ModelConfig cfg_;
  Linear embed_;
  Tensor enc_pos_;  // [P, embed_dim] fixed
  Tensor cls_token_;
  std::vector<TransformerBlock> enc_blocks_;
  Tensor enc_ln_g_, enc_ln_b_;

  Linear dec_proj_;
  Tensor mask_token_;
  Tensor dec_pos_;  // [P, decoder_dim] fixed
  std::vector<TransformerBlock> dec_blocks_;
  Tensor dec_ln_g_, dec_ln_b_;
  Linear pixel_proj_;
};

// Variational approximation network q_theta(z|x): two branches predicting
// the mean and standard deviation of a diagonal Gaussian.
class ApproxNet {
 public:
  ApproxNet(int input_dim, int hidden_dim, int latent_dim, float sigma_floor, uint64_t seed);

  GaussianPosterior forward(const Tensor& x_masked) const;

  std::vector<Tensor> params() const;
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  float sigma_floor() const { return sigma_floor_; }
  int input_dim() const { return input_dim_; }
  int latent_dim() const { return latent_dim_; }

 private:
  int input_dim_, hidden_dim_, latent_dim_;
  float sigma_floor_;
  Linear mu_fc1_, mu_fc2_, mu_fc3_;
  Linear sg_fc1_, sg_fc2_, sg_fc3_;
};

}  // namespace mimae
