#include "mimae/masking.hpp"

#include <algorithm>
#include <cmath>

#include "mimae/ops.hpp"
#include "mimae/rng.hpp"

namespace mimae {

std::vector<int> MaskSet::visible_indices(int mask_id) const {
  std::vector<int> out;
  const auto& m = masks.at(size_t(mask_id));
  for (int p = 0; p < num_patches; ++p)
    if (m[size_t(p)] == 0) out.push_back(p);
  return out;
}

std::vector<int> MaskSet::masked_indices(int mask_id) const {
  std::vector<int> out;
  const auto& m = masks.at(size_t(mask_id));
  for (int p = 0; p < num_patches; ++p)
    if (m[size_t(p)] != 0) out.push_back(p);
  return out;
}

int mask_count(float ratio, MaskCountMode mode) {
  if (!(ratio > 0.0f && ratio < 1.0f))
    throw ContractError("mask_count: ratio must lie in (0,1), got " + std::to_string(ratio));
  if (mode == MaskCountMode::fixed4) return 4;
  const int n = int(std::lround(1.0 / (1.0 - double(ratio))));
  return std::max(2, n);
}

MaskSet gen_orthogonal(int num_patches, int num_masks, uint64_t seed) {
  if (num_masks < 2) throw ContractError("gen_orthogonal: need at least 2 masks");
  if (num_patches < num_masks)
    throw ContractError("gen_orthogonal: " + std::to_string(num_patches) + " patches cannot host " +
                        std::to_string(num_masks) + " disjoint visible sets");
  Rng rng(seed);
  std::vector<int> perm = rng.permutation(num_patches);

  MaskSet set;
  set.num_patches = num_patches;
  set.strategy = MaskStrategy::orthogonal;
  set.ratio = 1.0f - 1.0f / float(num_masks);
  set.seed = seed;
  set.masks.assign(size_t(num_masks), std::vector<uint8_t>(size_t(num_patches), 1));

  const int base = num_patches / num_masks;
  const int extra = num_patches % num_masks;
  int pos = 0;
  for (int i = 0; i < num_masks; ++i) {
    const int chunk = base + (i < extra ? 1 : 0);
    for (int j = 0; j < chunk; ++j) set.masks[size_t(i)][size_t(perm[size_t(pos++)])] = 0;
  }
  return set;
}

MaskSet gen_independent(int num_patches, float ratio, int num_masks, uint64_t seed) {
  if (!(ratio > 0.0f && ratio < 1.0f))
    throw ContractError("gen_independent: ratio must lie in (0,1), got " + std::to_string(ratio));
  const int visible = int(std::lround(double(num_patches) * (1.0 - double(ratio))));
  if (visible < 1) throw ContractError("gen_independent: visible patch count is zero");
  if (visible > num_patches) throw ContractError("gen_independent: visible count exceeds patches");
  Rng rng(seed);

  MaskSet set;
  set.num_patches = num_patches;
  set.strategy = MaskStrategy::independent;
  set.ratio = ratio;
  set.seed = seed;
  set.masks.assign(size_t(num_masks), std::vector<uint8_t>(size_t(num_patches), 1));
  for (int i = 0; i < num_masks; ++i) {
    std::vector<int> perm = rng.permutation(num_patches);
    for (int j = 0; j < visible; ++j) set.masks[size_t(i)][size_t(perm[size_t(j)])] = 0;
  }
  return set;
}

MaskedView apply_mask(const Tensor& images, const std::vector<uint8_t>& mask) {
  if (images.ndim() != 3)
    throw DimensionError("apply_mask: expected [B,P,D], got " + shape_str(images.shape()));
  const int B = images.dim(0), P = images.dim(1);
  if (int(mask.size()) != P)
    throw DimensionError("apply_mask: mask length " + std::to_string(mask.size()) +
                         " does not match " + std::to_string(P) + " patches");
  std::vector<int> index_map;
  for (int p = 0; p < P; ++p)
    if (mask[size_t(p)] == 0) index_map.push_back(p);
  std::vector<std::vector<int>> idx(size_t(B), index_map);
  MaskedView view;
  view.visible = gather_patches(images, idx);
  view.index_map = std::move(index_map);
  return view;
}

}  // namespace mimae
