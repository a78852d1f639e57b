#include "mimae/objectives.hpp"

#include <cmath>

#include "mimae/ops.hpp"

namespace mimae {

namespace {

constexpr float kDiagExclude = -1e9f;

// target with each patch row normalized to zero mean / unit variance
Tensor normalize_patch_targets(const Tensor& target) {
  const int B = target.dim(0), P = target.dim(1), D = target.dim(2);
  std::vector<float> out(target.values());
  for (int64_t r = 0; r < int64_t(B) * P; ++r) {
    float* row = out.data() + r * D;
    double mean = 0.0;
    for (int d = 0; d < D; ++d) mean += row[d];
    mean /= D;
    double var = 0.0;
    for (int d = 0; d < D; ++d) var += (row[d] - mean) * (row[d] - mean);
    var /= D;
    const double inv = 1.0 / std::sqrt(var + 1e-6);
    for (int d = 0; d < D; ++d) row[d] = float((row[d] - mean) * inv);
  }
  return Tensor::from_values(target.shape(), std::move(out));
}

// cosine-similarity logits over latent rows with the diagonal excluded:
// returns {sims/tau, row logsumexp without c=i}
std::pair<Tensor, Tensor> nce_logits(const Tensor& latents, float tau) {
  if (latents.ndim() != 2) throw DimensionError("info_nce: latents must be [NB, L]");
  const int NB = latents.dim(0);
  if (NB < 2) throw ContractError("info_nce: need at least two latents");
  Tensor zn = normalize_rows(latents);
  Tensor logits = scale(matmul(zn, transpose_last(zn)), 1.0f / tau);
  std::vector<float> diag(size_t(NB) * size_t(NB), 0.0f);
  for (int i = 0; i < NB; ++i) diag[size_t(int64_t(i) * NB + i)] = kDiagExclude;
  Tensor masked = add(logits, Tensor::from_values({NB, NB}, std::move(diag)));
  return {logits, logsumexp_rows(masked)};
}

}  // namespace

void LossWeights::validate() const {
  if (!(tau > 0.0f)) throw ContractError("loss weights: tau must be positive");
  if (lambda1 < 0.0f || lambda2 < 0.0f || lambda3 < 0.0f)
    throw ContractError("loss weights: lambdas must be nonnegative");
  if (!(epsilon_l > 0.0f)) throw ContractError("loss weights: epsilon_l must be positive");
}

Tensor rec_loss(const Tensor& pred, const Tensor& target,
                const std::vector<std::vector<int>>& masked_idx, bool norm_pix) {
  if (pred.shape() != target.shape())
    throw DimensionError("rec_loss: pred " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  if (pred.ndim() != 3) throw DimensionError("rec_loss: expected [B,P,patch_dim]");
  for (const auto& row : masked_idx)
    if (row.empty()) throw ContractError("rec_loss: empty masked set");
  Tensor tgt = norm_pix ? normalize_patch_targets(target) : target;
  Tensor diff = sub(gather_patches(pred, masked_idx), gather_patches(tgt, masked_idx));
  return mean_all(square(diff));
}

Tensor rec_loss(const Tensor& pred, const Tensor& target, const std::vector<uint8_t>& mask,
                bool norm_pix) {
  if (pred.ndim() != 3) throw DimensionError("rec_loss: expected [B,P,patch_dim]");
  const int B = pred.dim(0), P = pred.dim(1);
  if (int(mask.size()) != P) throw DimensionError("rec_loss: mask length does not match patches");
  std::vector<int> masked;
  for (int p = 0; p < P; ++p)
    if (mask[size_t(p)] != 0) masked.push_back(p);
  return rec_loss(pred, target, std::vector<std::vector<int>>(size_t(B), masked), norm_pix);
}

Tensor info_nce_pair(const Tensor& latents, int i, int k, float tau) {
  const int NB = latents.dim(0);
  if (i < 0 || i >= NB || k < 0 || k >= NB)
    throw ContractError("info_nce_pair: index out of range");
  if (i == k) throw ContractError("info_nce_pair: positive pair needs distinct indices");
  if (!(tau > 0.0f)) throw ContractError("info_nce_pair: tau must be positive");
  auto [logits, lse] = nce_logits(latents, tau);

  std::vector<float> ei(size_t(NB), 0.0f);
  ei[size_t(i)] = 1.0f;
  std::vector<float> eik(size_t(NB) * size_t(NB), 0.0f);
  eik[size_t(int64_t(i) * NB + k)] = 1.0f;
  Tensor lse_i = sum_all(mul(lse, Tensor::from_values({NB}, std::move(ei))));
  Tensor logit_ik = sum_all(mul(logits, Tensor::from_values({NB, NB}, std::move(eik))));
  return sub(lse_i, logit_ik);
}

Tensor max_mi_loss(const std::vector<Tensor>& latents_per_mask, float tau) {
  const int N = int(latents_per_mask.size());
  if (N < 2) throw ContractError("max_mi_loss: need at least two masks per image");
  if (!(tau > 0.0f)) throw ContractError("max_mi_loss: tau must be positive");
  const int B = latents_per_mask[0].dim(0);
  for (const Tensor& t : latents_per_mask)
    if (t.ndim() != 2 || t.dim(0) != B)
      throw DimensionError("max_mi_loss: per-mask latents must share shape [B, L]");

  // row r = j*B + b  (mask j of image b)
  Tensor z = concat_rows(latents_per_mask);
  auto [logits, lse] = nce_logits(z, tau);
  const int NB = N * B;

  // positive-pair indicator: same image, different mask
  std::vector<float> w(size_t(NB) * size_t(NB), 0.0f);
  std::vector<float> row_w(size_t(NB), 0.0f);
  for (int r = 0; r < NB; ++r)
    for (int c = 0; c < NB; ++c)
      if (r != c && r % B == c % B) {
        w[size_t(int64_t(r) * NB + c)] = 1.0f;
        row_w[size_t(r)] += 1.0f;
      }
  Tensor pos_sum = sum_all(mul(logits, Tensor::from_values({NB, NB}, std::move(w))));
  Tensor lse_sum = sum_all(mul(lse, Tensor::from_values({NB}, std::move(row_w))));
  return scale(sub(lse_sum, pos_sum), 1.0f / (float(N) * float(N) * float(B)));
}

Tensor approx_loss(const std::vector<GaussianPosterior>& posteriors,
                   const std::vector<Tensor>& latents_detached, float sigma_floor) {
  const size_t N = posteriors.size();
  if (N == 0 || latents_detached.size() != N)
    throw ContractError("approx_loss: posterior/latent counts disagree");
  for (const Tensor& z : latents_detached)
    if (z.requires_grad())
      throw ContractError("approx_loss: latents must be detached (stop-gradient contract)");
  Tensor acc;
  for (size_t j = 0; j < N; ++j) {
    Tensor lp = mean_all(gaussian_log_prob(posteriors[j], latents_detached[j], sigma_floor));
    acc = acc.defined() ? add(acc, lp) : lp;
  }
  return scale(acc, -1.0f / float(N));
}

Tensor min_mi_loss(const std::vector<GaussianPosterior>& posteriors_detached,
                   const std::vector<Tensor>& latents, float sigma_floor) {
  const size_t N = posteriors_detached.size();
  if (N == 0 || latents.size() != N)
    throw ContractError("min_mi_loss: posterior/latent counts disagree");
  for (const GaussianPosterior& q : posteriors_detached)
    if (q.mu.requires_grad() || q.sigma.requires_grad())
      throw ContractError("min_mi_loss: posteriors must be detached (theta is held constant)");
  Tensor acc;
  for (size_t j = 0; j < N; ++j) {
    Tensor positive = gaussian_log_prob(posteriors_detached[j], latents[j], sigma_floor);
    Tensor contrast;
    for (size_t k = 0; k < N; ++k) {
      Tensor lp = gaussian_log_prob(posteriors_detached[j], latents[k], sigma_floor);
      contrast = contrast.defined() ? add(contrast, lp) : lp;
    }
    Tensor l_j = mean_all(sub(positive, scale(contrast, 1.0f / float(N))));
    acc = acc.defined() ? add(acc, l_j) : l_j;
  }
  return scale(acc, 1.0f / float(N));
}

LossReport combined_loss(float rec, float max_mi, float min_mi, float approx,
                         const LossWeights& weights, bool gate_open) {
  weights.validate();
  for (float v : {rec, max_mi, min_mi, approx})
    if (!std::isfinite(v)) throw ContractError("combined_loss: non-finite loss part");
  LossReport r;
  r.rec = rec;
  r.max_mi = max_mi;
  r.min_mi = min_mi;
  r.approx = approx;
  r.gate_open = gate_open;
  r.total = weights.lambda1 * rec;
  if (gate_open) r.total += weights.lambda2 * max_mi + weights.lambda3 * min_mi;
  return r;
}

Tensor combined_total(const Tensor& rec, const Tensor& max_mi, const Tensor& min_mi,
                      const LossWeights& weights, bool gate_open) {
  Tensor total = scale(rec, weights.lambda1);
  if (gate_open)
    total = add(total, add(scale(max_mi, weights.lambda2), scale(min_mi, weights.lambda3)));
  return total;
}

}  // namespace mimae
