#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

// Desk-scale stand-in for natural-image pretraining data: gratings with
// class-dependent frequency and orientation, random phase per image.
struct SyntheticSpec {
  int num_images = 512;
  int image_size = 32;
  int channels = 1;
  int class_count = 4;
  uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  int count = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  int label_count = 0;
  std::vector<float> pixels;     // count * C * H * W, row-major, in [0,1]
  std::vector<uint16_t> labels;  // count

  int64_t image_floats() const { return int64_t(channels) * height * width; }
  const float* image(int i) const { return pixels.data() + int64_t(i) * image_floats(); }

  // population statistics over every pixel (training-time standardization)
  double pixel_mean() const;
  double pixel_std() const;

  // [B,C,H,W] tensor of the given images; standardized when mean/std given
  Tensor batch(const std::vector<int>& indices, double mean = 0.0, double stddev = 1.0) const;

  // seed-determined permutation of [0, count)
  std::vector<int> shuffled_indices(uint64_t seed) const;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

// "MIMDS1" binary dataset file: magic, u32 count/H/W/C/label_count, then per
// image H*W*C f32 pixels + u16 label, all little-endian.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

// MNIST-style IDX ingestion (u8 images 0x803, u8 labels 0x801), rescaled to [0,1].
Dataset import_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace mimae
