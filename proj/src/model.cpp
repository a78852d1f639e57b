#include "mimae/model.hpp"

#include <cmath>

#include "mimae/ops.hpp"
#include "mimae/rng.hpp"

namespace mimae {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Tensor xavier_linear_weight(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<float> w(size_t(fan_in) * size_t(fan_out));
  for (float& x : w) x = float(rng.uniform(-limit, limit));
  return Tensor::param({fan_in, fan_out}, std::move(w));
}

Linear make_linear(int fan_in, int fan_out, Rng& rng) {
  Linear l;
  l.w = xavier_linear_weight(fan_in, fan_out, rng);
  l.b = Tensor::param({fan_out}, std::vector<float>(size_t(fan_out), 0.0f));
  return l;
}

Tensor token_param(int dim, Rng& rng) {
  std::vector<float> v(static_cast<size_t>(dim));
  for (float& x : v) x = float(0.02 * rng.normal());
  return Tensor::param({dim}, std::move(v));
}

Tensor ones_param(int dim) { return Tensor::param({dim}, std::vector<float>(size_t(dim), 1.0f)); }
Tensor zeros_param(int dim) { return Tensor::param({dim}, std::vector<float>(size_t(dim), 0.0f)); }

TransformerBlock make_block(int dim, Rng& rng) {
  TransformerBlock b;
  b.ln1_g = ones_param(dim);
  b.ln1_b = zeros_param(dim);
  b.wq = make_linear(dim, dim, rng);
  b.wk = make_linear(dim, dim, rng);
  b.wv = make_linear(dim, dim, rng);
  b.wo = make_linear(dim, dim, rng);
  b.ln2_g = ones_param(dim);
  b.ln2_b = zeros_param(dim);
  b.mlp1 = make_linear(dim, 4 * dim, rng);
  b.mlp2 = make_linear(4 * dim, dim, rng);
  return b;
}

// constant [B,T,D] copy of a [T,D] table; data only, carries no gradient
Tensor tile_table(const Tensor& table, int batch) {
  const int T = table.dim(0), D = table.dim(1);
  std::vector<float> out(size_t(batch) * size_t(T) * size_t(D));
  for (int b = 0; b < batch; ++b)
    std::copy(table.values().begin(), table.values().end(), out.begin() + int64_t(b) * T * D);
  return Tensor::from_values({batch, T, D}, std::move(out));
}

}  // namespace

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || channels <= 0)
    throw ConfigError("model: image_size, patch_size and channels must be positive");
  if (image_size % patch_size != 0)
    throw ConfigError("model: image_size " + std::to_string(image_size) +
                      " not divisible by patch_size " + std::to_string(patch_size));
  if (embed_dim % num_heads != 0)
    throw ConfigError("model: embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  if (decoder_dim % num_heads != 0)
    throw ConfigError("model: decoder_dim " + std::to_string(decoder_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  if (!(sigma_floor > 0.0f)) throw ConfigError("model: sigma_floor must be positive");
  if (latent_dim != embed_dim)
    throw ConfigError("model: latent_dim must equal embed_dim (the latent is the pooled token feature)");
  if (encoder_depth < 1 || decoder_depth < 1)
    throw ConfigError("model: encoder_depth and decoder_depth must be at least 1");
}

Tensor gaussian_log_prob(const GaussianPosterior& post, const Tensor& z, float sigma_floor) {
  if (post.mu.shape() != z.shape() || post.sigma.shape() != z.shape())
    throw DimensionError("gaussian_log_prob: shape mismatch between posterior and z");
  if (z.ndim() != 2) throw DimensionError("gaussian_log_prob: expected [B,L], got " + shape_str(z.shape()));
  for (float s : post.sigma.values())
    if (s < sigma_floor)
      throw ContractError("gaussian_log_prob: sigma below floor " + std::to_string(sigma_floor));
  const int L = z.dim(1);
  Tensor diff = sub(z, post.mu);
  Tensor ratio = divide(square(diff), square(post.sigma));
  Tensor log_var = scale(log_op(post.sigma), 2.0f);
  Tensor per_dim = add(ratio, log_var);
  Tensor summed = row_sum(per_dim);
  return scale(add_scalar(summed, float(double(L) * kLog2Pi)), -0.5f);
}

Tensor Linear::apply(const Tensor& x) const {
  const int in = w.dim(0), out = w.dim(1);
  if (x.ndim() == 2) {
    if (x.dim(1) != in)
      throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    return add_rowvec(matmul(x, w), b);
  }
  if (x.ndim() == 3) {
    const int B = x.dim(0), T = x.dim(1);
    if (x.dim(2) != in)
      throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    Tensor flat = reshape(x, {B * T, in});
    return reshape(add_rowvec(matmul(flat, w), b), {B, T, out});
  }
  throw DimensionError("linear: expected rank 2 or 3 input, got " + shape_str(x.shape()));
}

Tensor TransformerBlock::apply(const Tensor& x, int heads, float ln_eps) const {
  const int dh = x.dim(2) / heads;
  Tensor h = layer_norm(x, ln1_g, ln1_b, ln_eps);
  Tensor q = split_heads(wq.apply(h), heads);
  Tensor k = split_heads(wk.apply(h), heads);
  Tensor v = split_heads(wv.apply(h), heads);
  Tensor scores = scale(bmm(q, transpose_last(k)), 1.0f / std::sqrt(float(dh)));
  Tensor ctx = bmm(softmax_last(scores), v);
  Tensor attended = add(x, wo.apply(merge_heads(ctx, heads)));
  Tensor h2 = layer_norm(attended, ln2_g, ln2_b, ln_eps);
  Tensor m = mlp2.apply(gelu(mlp1.apply(h2)));
  return add(attended, m);
}

void TransformerBlock::collect(const std::string& prefix,
                               std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".ln1.g", ln1_g);
  out.emplace_back(prefix + ".ln1.b", ln1_b);
  out.emplace_back(prefix + ".wq.w", wq.w);
  out.emplace_back(prefix + ".wq.b", wq.b);
  out.emplace_back(prefix + ".wk.w", wk.w);
  out.emplace_back(prefix + ".wk.b", wk.b);
  out.emplace_back(prefix + ".wv.w", wv.w);
  out.emplace_back(prefix + ".wv.b", wv.b);
  out.emplace_back(prefix + ".wo.w", wo.w);
  out.emplace_back(prefix + ".wo.b", wo.b);
  out.emplace_back(prefix + ".ln2.g", ln2_g);
  out.emplace_back(prefix + ".ln2.b", ln2_b);
  out.emplace_back(prefix + ".mlp1.w", mlp1.w);
  out.emplace_back(prefix + ".mlp1.b", mlp1.b);
  out.emplace_back(prefix + ".mlp2.w", mlp2.w);
  out.emplace_back(prefix + ".mlp2.b", mlp2.b);
}

Tensor patchify(const Tensor& images, const ModelConfig& cfg) {
  if (images.ndim() != 4)
    throw DimensionError("patchify: expected [B,C,H,W], got " + shape_str(images.shape()));
  const int B = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  if (C != cfg.channels || H != cfg.image_size || W != cfg.image_size)
    throw DimensionError("patchify: image " + shape_str(images.shape()) + " does not match config");
  const int ps = cfg.patch_size, g = cfg.grid(), pd = cfg.patch_dim();
  std::vector<float> out(size_t(B) * size_t(cfg.num_patches()) * size_t(pd));
  const auto& iv = images.values();
  for (int b = 0; b < B; ++b)
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx) {
        const int p = gy * g + gx;
        float* dst = out.data() + ((int64_t(b) * cfg.num_patches()) + p) * pd;
        for (int c = 0; c < C; ++c)
          for (int py = 0; py < ps; ++py)
            for (int px = 0; px < ps; ++px)
              *dst++ = iv[size_t(((int64_t(b) * C + c) * H + gy * ps + py) * W + gx * ps + px)];
      }
  return Tensor::from_values({B, cfg.num_patches(), pd}, std::move(out));
}

std::vector<float> sinusoidal_table(int positions, int dim) {
  std::vector<float> t(size_t(positions) * size_t(dim));
  for (int p = 0; p < positions; ++p)
    for (int i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -double(i) / double(dim));
      t[size_t(int64_t(p) * dim + i)] = float(std::sin(p * freq));
      if (i + 1 < dim) t[size_t(int64_t(p) * dim + i + 1)] = float(std::cos(p * freq));
    }
  return t;
}

MaeModel::MaeModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix64(seed, 0x6d6165u));  // model stream
  const int P = cfg_.num_patches();

  embed_ = make_linear(cfg_.patch_dim(), cfg_.embed_dim, rng);
  enc_pos_ = Tensor::from_values({P, cfg_.embed_dim}, sinusoidal_table(P, cfg_.embed_dim));
  cls_token_ = token_param(cfg_.embed_dim, rng);
  for (int i = 0; i < cfg_.encoder_depth; ++i) enc_blocks_.push_back(make_block(cfg_.embed_dim, rng));
  enc_ln_g_ = ones_param(cfg_.embed_dim);
  enc_ln_b_ = zeros_param(cfg_.embed_dim);

  dec_proj_ = make_linear(cfg_.embed_dim, cfg_.decoder_dim, rng);
  mask_token_ = token_param(cfg_.decoder_dim, rng);
  dec_pos_ = Tensor::from_values({P, cfg_.decoder_dim}, sinusoidal_table(P, cfg_.decoder_dim));
  for (int i = 0; i < cfg_.decoder_depth; ++i) dec_blocks_.push_back(make_block(cfg_.decoder_dim, rng));
  dec_ln_g_ = ones_param(cfg_.decoder_dim);
  dec_ln_b_ = zeros_param(cfg_.decoder_dim);
  pixel_proj_ = make_linear(cfg_.decoder_dim, cfg_.patch_dim(), rng);
}

Tensor MaeModel::patch_embed(const Tensor& images) const {
  Tensor patches = patchify(images, cfg_);
  Tensor tokens = embed_.apply(patches);
  return add(tokens, tile_table(enc_pos_, images.dim(0)));
}

LatentBatch MaeModel::encode(const Tensor& visible_tokens, int mask_id) const {
  if (visible_tokens.ndim() != 3 || visible_tokens.dim(2) != cfg_.embed_dim)
    throw DimensionError("encode: expected [B,V,embed_dim], got " + shape_str(visible_tokens.shape()));
  if (visible_tokens.dim(1) < 1) throw ContractError("encode: need at least one visible token");
  const int B = visible_tokens.dim(0), V = visible_tokens.dim(1);

  Tensor seq = concat_tokens(broadcast_to_batch(cls_token_, B), visible_tokens);
  for (const auto& blk : enc_blocks_) seq = blk.apply(seq, cfg_.num_heads, cfg_.ln_eps);
  seq = layer_norm(seq, enc_ln_g_, enc_ln_b_, cfg_.ln_eps);

  Tensor z;
  if (cfg_.pooling == LatentPooling::class_token) {
    z = reshape(slice_tokens(seq, 0, 1), {B, cfg_.embed_dim});
  } else {
    Tensor patch_tokens = slice_tokens(seq, 1, V);
    Tensor weights = Tensor::from_values({B, 1, V}, std::vector<float>(size_t(B) * V, 1.0f / float(V)));
    z = reshape(bmm(weights, patch_tokens), {B, cfg_.embed_dim});
  }
  LatentBatch out;
  out.tokens = seq;
  out.z_vec = z;
  out.mask_id = mask_id;
  return out;
}

Tensor MaeModel::decode(const LatentBatch& latent, const std::vector<std::vector<int>>& visible_idx) const {
  const int B = latent.tokens.dim(0);
  const int V = latent.tokens.dim(1) - 1;
  const int P = cfg_.num_patches();
  if (int(visible_idx.size()) != B) throw DimensionError("decode: index rows do not match batch");
  for (const auto& row : visible_idx)
    if (int(row.size()) != V)
      throw DimensionError("decode: visible index width " + std::to_string(row.size()) +
                           " does not match " + std::to_string(V) + " tokens");

  std::vector<std::vector<int>> masked_idx(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    std::vector<uint8_t> vis(size_t(P), 0);
    for (int p : visible_idx[size_t(b)]) vis[size_t(p)] = 1;
    for (int p = 0; p < P; ++p)
      if (!vis[size_t(p)]) masked_idx[size_t(b)].push_back(p);
  }
  const int M = P - V;

  Tensor t = dec_proj_.apply(latent.tokens);
  Tensor cls = slice_tokens(t, 0, 1);
  Tensor vis = slice_tokens(t, 1, V);
  Tensor placed = scatter_patches(vis, visible_idx, P);
  if (M > 0) placed = add(placed, scatter_patches(broadcast_token(mask_token_, B, M), masked_idx, P));
  placed = add(placed, tile_table(dec_pos_, B));

  Tensor seq = concat_tokens(cls, placed);
  for (const auto& blk : dec_blocks_) seq = blk.apply(seq, cfg_.num_heads, cfg_.ln_eps);
  seq = layer_norm(seq, dec_ln_g_, dec_ln_b_, cfg_.ln_eps);
  return pixel_proj_.apply(slice_tokens(seq, 1, P));
}

Tensor MaeModel::decode(const LatentBatch& latent, const std::vector<int>& visible_idx, int batch) const {
  return decode(latent, std::vector<std::vector<int>>(size_t(batch), visible_idx));
}

std::vector<Tensor> MaeModel::encoder_params() const {
  std::vector<std::pair<std::string, Tensor>> named;
  named.emplace_back("enc.embed.w", embed_.w);
  named.emplace_back("enc.embed.b", embed_.b);
  named.emplace_back("enc.cls", cls_token_);
  for (size_t i = 0; i < enc_blocks_.size(); ++i)
    enc_blocks_[i].collect("enc.block" + std::to_string(i), named);
  named.emplace_back("enc.ln.g", enc_ln_g_);
  named.emplace_back("enc.ln.b", enc_ln_b_);
  std::vector<Tensor> out;
  for (auto& [n, t] : named) out.push_back(t);
  return out;
}

std::vector<Tensor> MaeModel::decoder_params() const {
  std::vector<std::pair<std::string, Tensor>> named;
  named.emplace_back("dec.proj.w", dec_proj_.w);
  named.emplace_back("dec.proj.b", dec_proj_.b);
  named.emplace_back("dec.mask_token", mask_token_);
  for (size_t i = 0; i < dec_blocks_.size(); ++i)
    dec_blocks_[i].collect("dec.block" + std::to_string(i), named);
  named.emplace_back("dec.ln.g", dec_ln_g_);
  named.emplace_back("dec.ln.b", dec_ln_b_);
  named.emplace_back("dec.pixel.w", pixel_proj_.w);
  named.emplace_back("dec.pixel.b", pixel_proj_.b);
  std::vector<Tensor> out;
  for (auto& [n, t] : named) out.push_back(t);
  return out;
}

std::vector<Tensor> MaeModel::params() const {
  std::vector<Tensor> out = encoder_params();
  std::vector<Tensor> dec = decoder_params();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

std::vector<std::pair<std::string, Tensor>> MaeModel::named_params() const {
  std::vector<std::pair<std::string, Tensor>> named;
  named.emplace_back("enc.embed.w", embed_.w);
  named.emplace_back("enc.embed.b", embed_.b);
  named.emplace_back("enc.cls", cls_token_);
  for (size_t i = 0; i < enc_blocks_.size(); ++i)
    enc_blocks_[i].collect("enc.block" + std::to_string(i), named);
  named.emplace_back("enc.ln.g", enc_ln_g_);
  named.emplace_back("enc.ln.b", enc_ln_b_);
  named.emplace_back("dec.proj.w", dec_proj_.w);
  named.emplace_back("dec.proj.b", dec_proj_.b);
  named.emplace_back("dec.mask_token", mask_token_);
  for (size_t i = 0; i < dec_blocks_.size(); ++i)
    dec_blocks_[i].collect("dec.block" + std::to_string(i), named);
  named.emplace_back("dec.ln.g", dec_ln_g_);
  named.emplace_back("dec.ln.b", dec_ln_b_);
  named.emplace_back("dec.pixel.w", pixel_proj_.w);
  named.emplace_back("dec.pixel.b", pixel_proj_.b);
  return named;
}

ApproxNet::ApproxNet(int input_dim, int hidden_dim, int latent_dim, float sigma_floor, uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), latent_dim_(latent_dim), sigma_floor_(sigma_floor) {
  if (input_dim < 1 || hidden_dim < 1 || latent_dim < 1)
    throw ConfigError("approx net: dimensions must be positive");
  if (!(sigma_floor > 0.0f)) throw ConfigError("approx net: sigma_floor must be positive");
  Rng rng(mix64(seed, 0x617070u));  // approx stream
  mu_fc1_ = make_linear(input_dim, hidden_dim, rng);
  mu_fc2_ = make_linear(hidden_dim, hidden_dim, rng);
  mu_fc3_ = make_linear(hidden_dim, latent_dim, rng);
  sg_fc1_ = make_linear(input_dim, hidden_dim, rng);
  sg_fc2_ = make_linear(hidden_dim, hidden_dim, rng);
  sg_fc3_ = make_linear(hidden_dim, latent_dim, rng);
  // bias the sigma head positive so the ReLU starts active and the initial
  // density sits at unit scale instead of the floor
  for (float& b : sg_fc3_.b.mutable_values()) b = 1.0f;
}

GaussianPosterior ApproxNet::forward(const Tensor& x_masked) const {
  if (x_masked.ndim() != 2 || x_masked.dim(1) != input_dim_)
    throw DimensionError("approx_forward: expected [B," + std::to_string(input_dim_) + "], got " +
                         shape_str(x_masked.shape()));
  GaussianPosterior post;
  post.mu = leaky_relu(mu_fc3_.apply(mu_fc2_.apply(gelu(mu_fc1_.apply(x_masked)))));
  Tensor s = relu(sg_fc3_.apply(sg_fc2_.apply(gelu(sg_fc1_.apply(x_masked)))));
  post.sigma = add_scalar(s, sigma_floor_);
  return post;
}

std::vector<Tensor> ApproxNet::params() const {
  return {mu_fc1_.w, mu_fc1_.b, mu_fc2_.w, mu_fc2_.b, mu_fc3_.w, mu_fc3_.b,
          sg_fc1_.w, sg_fc1_.b, sg_fc2_.w, sg_fc2_.b, sg_fc3_.w, sg_fc3_.b};
}

std::vector<std::pair<std::string, Tensor>> ApproxNet::named_params() const {
  return {{"approx.mu1.w", mu_fc1_.w}, {"approx.mu1.b", mu_fc1_.b}, {"approx.mu2.w", mu_fc2_.w},
          {"approx.mu2.b", mu_fc2_.b}, {"approx.mu3.w", mu_fc3_.w}, {"approx.mu3.b", mu_fc3_.b},
          {"approx.sg1.w", sg_fc1_.w}, {"approx.sg1.b", sg_fc1_.b}, {"approx.sg2.w", sg_fc2_.w},
          {"approx.sg2.b", sg_fc2_.b}, {"approx.sg3.w", sg_fc3_.w}, {"approx.sg3.b", sg_fc3_.b}};
}

}  // namespace mimae
