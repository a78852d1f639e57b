#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

struct TensorEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// "MIMAE1" checkpoint payload: config snapshot, named tensor table (model,
// approximation net, optimizer moments), optimizer step counters, train
// state scalars. The RNG state is the master seed plus the counters; every
// randomness stream is derived from those.
struct CheckpointData {
  uint32_t version = 1;
  std::string config_text;
  std::vector<TensorEntry> tensors;

  int64_t epoch = 0;        // completed epochs
  int64_t global_step = 0;  // completed steps
  uint8_t gate_open = 0;
  int64_t gate_open_epoch = -1;  // epoch whose mean first crossed the gate
  double running_rec_sum = 0.0;
  int64_t running_rec_count = 0;
  int64_t opt_main_t = 0;
  int64_t opt_approx_t = 0;
  std::string rng_state;

  const TensorEntry* find(const std::string& name) const;
};

// Bitwise round-trip: load(save(x)) == x, save(load(f)) == f byte for byte.
// A trailing CRC32 guards the whole file; mismatch raises FormatError.
void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace mimae
