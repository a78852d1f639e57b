#include "mimae/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace mimae {

namespace {

constexpr char kMagic[6] = {'M', 'I', 'M', 'A', 'E', '1'};

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(char(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void i64(int64_t v) {
    uint64_t u = uint64_t(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(char((u >> (8 * i)) & 0xff));
  }
  void f32(float v) {
    uint32_t u = 0;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void f64(double v) {
    uint64_t u = 0;
    std::memcpy(&u, &v, 8);
    i64(int64_t(u));
  }
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  uint8_t u8() {
    need(1, "u8");
    return uint8_t(data_[pos_++]);
  }
  uint32_t u32() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(data_[pos_ + size_t(i)])) << (8 * i);
    pos_ += 4;
    return v;
  }
  int64_t i64() {
    need(8, "i64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(data_[pos_ + size_t(i)])) << (8 * i);
    pos_ += 8;
    return int64_t(v);
  }
  float f32() {
    const uint32_t u = u32();
    float f = 0.0f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  double f64() {
    const uint64_t u = uint64_t(i64());
    double d = 0.0;
    std::memcpy(&d, &u, 8);
    return d;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n, "string");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(size_t n, const char* what) {
    if (pos_ + n > data_.size())
      throw FormatError(path_ + ": truncated " + std::string(what) + " at offset " +
                        std::to_string(pos_));
  }
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

uint32_t crc_of(const std::string& bytes) {
  return uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), uInt(bytes.size())));
}

}  // namespace

const TensorEntry* CheckpointData::find(const std::string& name) const {
  for (const TensorEntry& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  ByteWriter w;
  w.u32(data.version);
  w.str(data.config_text);
  w.u32(uint32_t(data.tensors.size()));
  for (const TensorEntry& t : data.tensors) {
    w.str(t.name);
    w.u32(uint32_t(t.shape.size()));
    for (int d : t.shape) w.u32(uint32_t(d));
    if (numel(t.shape) != int64_t(t.values.size()))
      throw ContractError("checkpoint: tensor '" + t.name + "' shape/value mismatch");
    for (float v : t.values) w.f32(v);
  }
  w.i64(data.epoch);
  w.i64(data.global_step);
  w.u8(data.gate_open);
  w.i64(data.gate_open_epoch);
  w.f64(data.running_rec_sum);
  w.i64(data.running_rec_count);
  w.i64(data.opt_main_t);
  w.i64(data.opt_approx_t);
  w.str(data.rng_state);

  std::string payload(kMagic, 6);
  payload += w.data();
  const uint32_t crc = crc_of(payload);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out.write(payload.data(), std::streamsize(payload.size()));
  char crc_bytes[4];
  for (int i = 0; i < 4; ++i) crc_bytes[i] = char((crc >> (8 * i)) & 0xff);
  out.write(crc_bytes, 4);
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 10) throw FormatError(path + ": file too small for a MIMAE1 checkpoint");

  const std::string payload = bytes.substr(0, bytes.size() - 4);
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= uint32_t(uint8_t(bytes[bytes.size() - 4 + size_t(i)])) << (8 * i);
  if (crc_of(payload) != stored)
    throw FormatError(path + ": CRC32 mismatch, checkpoint is corrupted");
  if (std::memcmp(payload.data(), kMagic, 6) != 0)
    throw FormatError(path + ": bad magic, not a MIMAE1 checkpoint");

  const std::string body = payload.substr(6);
  ByteReader r(body, path);
  CheckpointData d;
  d.version = r.u32();
  if (d.version != 1)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(d.version));
  d.config_text = r.str();
  const uint32_t ntensors = r.u32();
  d.tensors.reserve(ntensors);
  for (uint32_t i = 0; i < ntensors; ++i) {
    TensorEntry t;
    t.name = r.str();
    const uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError(path + ": tensor rank " + std::to_string(ndim) + " unreasonable");
    for (uint32_t k = 0; k < ndim; ++k) t.shape.push_back(int(r.u32()));
    const int64_t n = numel(t.shape);
    if (n < 0 || n > (int64_t(1) << 31)) throw FormatError(path + ": tensor size unreasonable");
    t.values.resize(size_t(n));
    for (int64_t k = 0; k < n; ++k) t.values[size_t(k)] = r.f32();
    d.tensors.push_back(std::move(t));
  }
  d.epoch = r.i64();
  d.global_step = r.i64();
  d.gate_open = r.u8();
  d.gate_open_epoch = r.i64();
  d.running_rec_sum = r.f64();
  d.running_rec_count = r.i64();
  d.opt_main_t = r.i64();
  d.opt_approx_t = r.i64();
  d.rng_state = r.str();
  if (r.remaining() != 0)
    throw FormatError(path + ": trailing bytes at offset " + std::to_string(r.pos()));
  return d;
}

}  // namespace mimae
