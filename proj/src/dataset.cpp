#include "mimae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mimae/rng.hpp"

namespace mimae {

namespace {

constexpr char kMagic[6] = {'M', 'I', 'M', 'D', 'S', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_f32(std::ostream& os, float v) {
  uint32_t u = 0;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

  void read(void* dst, size_t n, const char* what) {
    in_.read(reinterpret_cast<char*>(dst), std::streamsize(n));
    if (size_t(in_.gcount()) != n)
      throw FormatError(path_ + ": truncated while reading " + std::string(what) + " at offset " +
                        std::to_string(offset_));
    offset_ += n;
  }

  uint32_t read_u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  }

  uint16_t read_u16(const char* what) {
    unsigned char b[2];
    read(b, 2, what);
    return uint16_t(uint32_t(b[0]) | uint32_t(b[1]) << 8);
  }

  float read_f32(const char* what) {
    const uint32_t u = read_u32(what);
    float f = 0.0f;
    std::memcpy(&f, &u, 4);
    return f;
  }

  size_t offset() const { return offset_; }
  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

 private:
  std::ifstream& in_;
  std::string path_;
  size_t offset_ = 0;
};

}  // namespace

void SyntheticSpec::validate() const {
  if (num_images < 1) throw ContractError("synthetic: num_images must be positive");
  if (image_size < 4) throw ContractError("synthetic: image_size too small");
  if (channels < 1) throw ContractError("synthetic: channels must be positive");
  if (class_count < 1 || class_count > 65535)
    throw ContractError("synthetic: class_count outside [1, 65535]");
}

double Dataset::pixel_mean() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (float v : pixels) s += v;
  return s / double(pixels.size());
}

double Dataset::pixel_std() const {
  if (pixels.empty()) return 1.0;
  const double m = pixel_mean();
  double s = 0.0;
  for (float v : pixels) s += (v - m) * (v - m);
  return std::sqrt(s / double(pixels.size()) + 1e-12);
}

Tensor Dataset::batch(const std::vector<int>& indices, double mean, double stddev) const {
  const int64_t per = image_floats();
  std::vector<float> out(indices.size() * size_t(per));
  const float m = float(mean);
  const float inv = float(1.0 / stddev);
  for (size_t b = 0; b < indices.size(); ++b) {
    const int i = indices[b];
    if (i < 0 || i >= count) throw ContractError("dataset: image index out of range");
    const float* src = image(i);
    float* dst = out.data() + b * size_t(per);
    for (int64_t j = 0; j < per; ++j) dst[j] = (src[j] - m) * inv;
  }
  return Tensor::from_values({int(indices.size()), channels, height, width}, std::move(out));
}

std::vector<int> Dataset::shuffled_indices(uint64_t seed) const {
  Rng rng(seed);
  return rng.permutation(count);
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset d;
  d.count = spec.num_images;
  d.height = spec.image_size;
  d.width = spec.image_size;
  d.channels = spec.channels;
  d.label_count = spec.class_count;
  d.pixels.resize(size_t(d.count) * size_t(d.image_floats()));
  d.labels.resize(size_t(d.count));

  const int S = spec.image_size;
  for (int i = 0; i < spec.num_images; ++i) {
    const int cls = i % spec.class_count;  // round-robin keeps classes balanced
    Rng rng(mix64(spec.seed, uint64_t(i), 0x73796eu));
    const double theta = M_PI * double(cls) / double(spec.class_count);
    const double freq = 2.0 + double(cls % 3);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = rng.uniform(0.8, 1.0);
    const double cx = std::cos(theta), sx = std::sin(theta);
    d.labels[size_t(i)] = uint16_t(cls);
    for (int c = 0; c < spec.channels; ++c) {
      const double chan_shift = c * 0.5;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          const double u = double(x) / S, v = double(y) / S;
          const double g = std::sin(2.0 * M_PI * freq * (u * cx + v * sx) + phase + chan_shift);
          double val = 0.5 + 0.5 * amp * g + rng.uniform(-0.02, 0.02);
          val = std::clamp(val, 0.0, 1.0);
          d.pixels[size_t(((int64_t(i) * spec.channels + c) * S + y) * S + x)] = float(val);
        }
    }
  }
  return d;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 6);
  write_u32(out, uint32_t(data.count));
  write_u32(out, uint32_t(data.height));
  write_u32(out, uint32_t(data.width));
  write_u32(out, uint32_t(data.channels));
  write_u32(out, uint32_t(data.label_count));
  for (int i = 0; i < data.count; ++i) {
    const float* img = data.image(i);
    for (int64_t j = 0; j < data.image_floats(); ++j) write_f32(out, img[j]);
    write_u16(out, data.labels[size_t(i)]);
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  Reader r(in, path);
  char magic[6];
  r.read(magic, 6, "magic");
  if (std::memcmp(magic, kMagic, 6) != 0)
    throw FormatError(path + ": bad magic, not a MIMDS1 dataset");
  Dataset d;
  d.count = int(r.read_u32("count"));
  d.height = int(r.read_u32("height"));
  d.width = int(r.read_u32("width"));
  d.channels = int(r.read_u32("channels"));
  d.label_count = int(r.read_u32("label_count"));
  if (d.count < 0 || d.height <= 0 || d.width <= 0 || d.channels <= 0)
    throw FormatError(path + ": nonsensical header dimensions");
  d.pixels.resize(size_t(d.count) * size_t(d.image_floats()));
  d.labels.resize(size_t(d.count));
  for (int i = 0; i < d.count; ++i) {
    for (int64_t j = 0; j < d.image_floats(); ++j)
      d.pixels[size_t(int64_t(i) * d.image_floats() + j)] = r.read_f32("pixels");
    d.labels[size_t(i)] = r.read_u16("label");
  }
  if (!r.at_eof()) throw FormatError(path + ": trailing bytes after image table");
  return d;
}

namespace {

uint32_t read_be_u32(Reader& r, const char* what) {
  unsigned char b[4];
  r.read(b, 4, what);
  return uint32_t(b[0]) << 24 | uint32_t(b[1]) << 16 | uint32_t(b[2]) << 8 | uint32_t(b[3]);
}

}  // namespace

Dataset import_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open IDX images '" + images_path + "'");
  Reader ri(imgs, images_path);
  if (read_be_u32(ri, "magic") != 0x00000803u)
    throw FormatError(images_path + ": not an IDX u8 image file");
  const uint32_t n = read_be_u32(ri, "count");
  const uint32_t h = read_be_u32(ri, "rows");
  const uint32_t w = read_be_u32(ri, "cols");

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("cannot open IDX labels '" + labels_path + "'");
  Reader rl(labs, labels_path);
  if (read_be_u32(rl, "magic") != 0x00000801u)
    throw FormatError(labels_path + ": not an IDX u8 label file");
  if (read_be_u32(rl, "count") != n)
    throw FormatError(labels_path + ": label count does not match image count");

  Dataset d;
  d.count = int(n);
  d.height = int(h);
  d.width = int(w);
  d.channels = 1;
  d.pixels.resize(size_t(n) * h * w);
  d.labels.resize(size_t(n));
  std::vector<unsigned char> row(size_t(h) * w);
  int max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    ri.read(row.data(), row.size(), "pixels");
    for (size_t j = 0; j < row.size(); ++j)
      d.pixels[size_t(i) * row.size() + j] = float(row[j]) / 255.0f;
    unsigned char lab = 0;
    rl.read(&lab, 1, "label");
    d.labels[size_t(i)] = lab;
    max_label = std::max(max_label, int(lab));
  }
  d.label_count = max_label + 1;
  return d;
}

}  // namespace mimae
