#pragma once

#include <vector>

#include "mimae/model.hpp"
#include "mimae/tensor.hpp"

namespace mimae {

struct LossWeights {
  float lambda1 = 1.0f;
  float lambda2 = 1.0f;
  float lambda3 = 10.0f;
  float tau = 0.07f;       // InfoNCE temperature
  float epsilon_l = 0.5f;  // gate threshold on the reconstruction loss

  void validate() const;
};

// The four loss values, the gate state, and the weighted total. The
// approximation NLL is reported but never enters the total; it trains the
// approximation network through its own update.
struct LossReport {
  float rec = 0.0f;
  float max_mi = 0.0f;
  float min_mi = 0.0f;
  float approx = 0.0f;
  bool gate_open = false;
  float total = 0.0f;
};

// Mean squared error over masked-patch pixels only. masked_idx holds each
// sample's masked patch ids (ascending); every row must be nonempty.
// norm_pix normalizes target patches to zero mean / unit variance first.
Tensor rec_loss(const Tensor& pred, const Tensor& target,
                const std::vector<std::vector<int>>& masked_idx, bool norm_pix = false);
// single mask shared by the whole batch
Tensor rec_loss(const Tensor& pred, const Tensor& target, const std::vector<uint8_t>& mask,
                bool norm_pix = false);

// -log[ exp(sim(z_i,z_k)/tau) / sum_{c != i} exp(sim(z_i,z_c)/tau) ] over the
// NB latents in `latents` (rows), with sim = cosine similarity.
Tensor info_nce_pair(const Tensor& latents, int i, int k, float tau);

// Eq-7-style pairwise InfoNCE: (1/N^2) sum_{i != k} over each image's N
// latents, averaged over the batch. latents_per_mask holds N tensors of
// shape [B, L]; negatives span all N*B latents.
Tensor max_mi_loss(const std::vector<Tensor>& latents_per_mask, float tau);

// (1/N) sum_j mean_b[ -log q_theta(z_j|X_j) ]. Latents must be detached;
// gradients flow only into the approximation network.
Tensor approx_loss(const std::vector<GaussianPosterior>& posteriors,
                   const std::vector<Tensor>& latents_detached, float sigma_floor);

// CLUB-style upper-bound surrogate: (1/N) sum_j mean_b[ log q(z_j|X_j) -
// (1/N) sum_k log q(z_k|X_j) ], contrast set = the N masks of the same
// image. Posteriors must be detached; gradients flow only into the latents.
Tensor min_mi_loss(const std::vector<GaussianPosterior>& posteriors_detached,
                   const std::vector<Tensor>& latents, float sigma_floor);

// Weighted, gated combination (scalar bookkeeping).
LossReport combined_loss(float rec, float max_mi, float min_mi, float approx,
                         const LossWeights& weights, bool gate_open);

// Graph-building counterpart used by the trainer for the encoder/decoder
// update: lambda1*rec + gate*(lambda2*max_mi + lambda3*min_mi).
Tensor combined_total(const Tensor& rec, const Tensor& max_mi, const Tensor& min_mi,
                      const LossWeights& weights, bool gate_open);

}  // namespace mimae
