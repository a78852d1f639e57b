#pragma once

#include <cstdint>
#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

enum class MaskStrategy { orthogonal, independent };
enum class MaskCountMode { complete, fixed4 };

// N binary patch masks for one image. Convention: 1 = masked, 0 = visible.
struct MaskSet {
  int num_patches = 0;
  std::vector<std::vector<uint8_t>> masks;  // N x P
  MaskStrategy strategy = MaskStrategy::orthogonal;
  float ratio = 0.0f;
  uint64_t seed = 0;

  int count() const { return int(masks.size()); }
  std::vector<int> visible_indices(int mask_id) const;  // ascending
  std::vector<int> masked_indices(int mask_id) const;   // ascending
};

// Number of masks for a target ratio. `complete` covers every patch:
// N = max(2, round(1/(1-ratio))). `fixed4` always uses 4 masks.
int mask_count(float ratio, MaskCountMode mode);

// Splits a random permutation of the P patches into N nearly equal chunks
// (sizes differ by at most 1, larger chunks first); chunk i is mask i's
// visible set, so visible sets are pairwise disjoint and cover all patches.
MaskSet gen_orthogonal(int num_patches, int num_masks, uint64_t seed);

// Each mask independently selects round(P*(1-ratio)) visible patches
// uniformly without replacement. No disjointness guarantee.
MaskSet gen_independent(int num_patches, float ratio, int num_masks, uint64_t seed);

// Gathers visible patch rows of [B,P,D] in ascending patch order. The
// returned index list allows an exact inverse scatter.
struct MaskedView {
  Tensor visible;              // [B, V, D]
  std::vector<int> index_map;  // ascending visible patch indices
};
MaskedView apply_mask(const Tensor& images, const std::vector<uint8_t>& mask);

}  // namespace mimae
