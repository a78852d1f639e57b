#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mimae/checkpoint.hpp"
#include "mimae/config.hpp"
#include "mimae/dataset.hpp"
#include "mimae/metrics.hpp"
#include "mimae/svg_plot.hpp"

using namespace mimae;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

// minimal XML well-formedness check: tag balance and quoting
bool xml_well_formed(const std::string& s) {
  std::vector<std::string> stack;
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    const size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    const bool closing = tag[0] == '/';
    const bool self_closing = tag.back() == '/';
    std::string name = tag.substr(closing ? 1 : 0);
    const size_t sp = name.find_first_of(" \t\n/");
    if (sp != std::string::npos) name = name.substr(0, sp);
    if (name.empty()) return false;
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("config: empty text yields documented defaults") {
  RunConfig parsed = parse_config("");
  RunConfig defaults;
  CHECK(serialize_config(parsed) == serialize_config(defaults));
  CHECK(parsed.mask_ratio == doctest::Approx(0.75f));
  CHECK(parsed.lambda3 == doctest::Approx(10.0f));
  CHECK(parsed.tau == doctest::Approx(0.07f));
  CHECK(parsed.epsilon_l == doctest::Approx(0.5f));
  CHECK(parsed.beta2 == doctest::Approx(0.95f));
}

TEST_CASE("config: ratio 0.75 resolves to 4 masks under the complete strategy") {
  RunConfig cfg = parse_config("mask_ratio = 0.75\n");
  CHECK(cfg.masks_per_image() == 4);
  CHECK(parse_config("mask_ratio = 0.5").masks_per_image() == 2);
  CHECK(parse_config("mask_ratio = 0.9").masks_per_image() == 10);
}

TEST_CASE("config: errors carry line numbers and key names") {
  try {
    parse_config("# comment\nmask_ratio = 1.5\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("mask_ratio") != std::string::npos);
  }
  try {
    parse_config("nonsense_key = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("nonsense_key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("epochs == 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 1\n"), ConfigError);  // InfoNCE needs >= 2
}

TEST_CASE("config: serialization round-trips losslessly") {
  RunConfig cfg;
  cfg.base_lr = 1.5e-3f;
  cfg.mask_ratio = 0.7321f;
  cfg.tau = 0.0699999f;
  cfg.seed = 18446744073709551615ull;
  cfg.latent_pooling = LatentPooling::mean_pool;
  cfg.gate_mode = GateMode::per_batch;
  cfg.norm_pix = true;
  cfg.dataset_path = "some/dir/file.mimds";
  const std::string text = serialize_config(cfg);
  RunConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.seed == cfg.seed);
  CHECK(back.tau == cfg.tau);  // bit-exact f32 round-trip
}

TEST_CASE("config: overrides and key listing") {
  RunConfig cfg;
  apply_override(cfg, "epochs", "7");
  CHECK(cfg.epochs == 7);
  CHECK_THROWS_AS(apply_override(cfg, "no_such", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "epochs", "zero"), ConfigError);

  auto keys = config_keys(cfg);
  CHECK(keys.size() > 40);
  for (const auto& k : keys) {
    CHECK(!k.key.empty());
    CHECK(!k.doc.empty());
  }
}

TEST_CASE("synthetic dataset: balance, determinism, range") {
  SyntheticSpec spec;
  spec.num_images = 1000;
  spec.class_count = 4;
  spec.image_size = 16;
  spec.seed = 9;
  Dataset d = gen_synthetic(spec);
  std::vector<int> counts(4, 0);
  for (uint16_t l : d.labels) ++counts[l];
  for (int c = 0; c < 4; ++c) CHECK(counts[size_t(c)] == 250);
  for (float p : d.pixels) {
    CHECK(p >= 0.0f);
    CHECK(p <= 1.0f);
  }

  std::filesystem::create_directories("io_tmp");
  save_dataset(d, "io_tmp/a.mimds");
  save_dataset(gen_synthetic(spec), "io_tmp/b.mimds");
  CHECK(slurp("io_tmp/a.mimds") == slurp("io_tmp/b.mimds"));
}

TEST_CASE("dataset file round-trip, truncation, shuffle") {
  SyntheticSpec spec;
  spec.num_images = 37;
  spec.class_count = 3;
  spec.image_size = 8;
  Dataset d = gen_synthetic(spec);
  std::filesystem::create_directories("io_tmp");
  save_dataset(d, "io_tmp/rt.mimds");
  Dataset back = load_dataset("io_tmp/rt.mimds");
  CHECK(back.count == d.count);
  CHECK(back.pixels == d.pixels);
  CHECK(back.labels == d.labels);
  CHECK(back.label_count == 3);

  // truncation by one byte fails with offset context
  std::string bytes = slurp("io_tmp/rt.mimds");
  spit("io_tmp/trunc.mimds", bytes.substr(0, bytes.size() - 1));
  try {
    load_dataset("io_tmp/trunc.mimds");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  spit("io_tmp/magic.mimds", "NOTMIMDSxxxx" + bytes.substr(12));
  CHECK_THROWS_AS(load_dataset("io_tmp/magic.mimds"), FormatError);

  // shuffled iteration is a permutation
  std::vector<int> idx = d.shuffled_indices(5);
  std::vector<int> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < d.count; ++i) CHECK(sorted[size_t(i)] == i);
  CHECK(d.shuffled_indices(5) == idx);
  CHECK(d.shuffled_indices(6) != idx);
}

TEST_CASE("checkpoint: bitwise round-trip, corruption, version") {
  std::filesystem::create_directories("io_tmp");
  CheckpointData d;
  d.config_text = "epochs = 3\n";
  d.tensors.push_back({"param.w", {2, 3}, {1, 2, 3, 4, 5, 6}});
  d.tensors.push_back({"optm.main.w", {2, 3}, {0, 0, 0.5f, 0, 0, 0}});
  d.epoch = 3;
  d.global_step = 12;
  d.gate_open = 1;
  d.gate_open_epoch = 2;
  d.running_rec_sum = 0.75;
  d.running_rec_count = 4;
  d.opt_main_t = 12;
  d.opt_approx_t = 12;
  d.rng_state = "5";

  save_checkpoint("io_tmp/a.mimae", d);
  CheckpointData back = load_checkpoint("io_tmp/a.mimae");
  save_checkpoint("io_tmp/b.mimae", back);
  CHECK(slurp("io_tmp/a.mimae") == slurp("io_tmp/b.mimae"));
  CHECK(back.tensors.size() == 2);
  CHECK(back.tensors[0].values == d.tensors[0].values);
  CHECK(back.gate_open == 1);
  CHECK(back.running_rec_sum == 0.75);

  // flip one payload byte: CRC must reject
  std::string bytes = slurp("io_tmp/a.mimae");
  std::string corrupt = bytes;
  corrupt[bytes.size() / 2] = char(corrupt[bytes.size() / 2] ^ 0x40);
  spit("io_tmp/corrupt.mimae", corrupt);
  CHECK_THROWS_AS(load_checkpoint("io_tmp/corrupt.mimae"), FormatError);

  CheckpointData v2 = d;
  v2.version = 2;
  save_checkpoint("io_tmp/v2.mimae", v2);
  CHECK_THROWS_AS(load_checkpoint("io_tmp/v2.mimae"), FormatError);
}

TEST_CASE("metrics writer and parser") {
  std::filesystem::create_directories("io_tmp");
  {
    MetricsWriter w("io_tmp/metrics.csv");
    for (int e = 1; e <= 5; ++e) {
      EpochMetrics m;
      m.epoch = e;
      m.step = e * 4;
      m.lr = 0.001f * float(e);
      m.rec = 2.0f / float(e);
      m.max_mi = 0.5f;
      m.min_mi = 0.01f;
      m.approx = 1.1f;
      m.gate_open = e >= 3;
      if (e == 5) m.probe_acc = 0.875;
      w.write_row(m);
    }
  }
  MetricsTable t = load_metrics_csv("io_tmp/metrics.csv");
  CHECK(t.columns.size() == 9);
  CHECK(t.rows.size() == 5);
  CHECK(t.rows[0][size_t(t.column("epoch"))] == "1");
  CHECK(t.rows[4][size_t(t.column("probe_acc"))] == "0.875");
  CHECK(t.rows[0][size_t(t.column("probe_acc"))] == "");
  int prev = 0;
  for (const auto& row : t.rows) {
    const int g = std::stoi(row[size_t(t.column("gate_open"))]);
    CHECK(g >= prev);
    prev = g;
  }

  CHECK_THROWS_AS(parse_metrics_csv("", "test"), FormatError);
  try {
    parse_metrics_csv("a,b\n1,2\n3\n", "test");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("plot: SVGs with threshold line; header-only CSV is an error") {
  std::filesystem::create_directories("io_tmp");
  {
    MetricsWriter w("io_tmp/toplot.csv");
    for (int e = 1; e <= 10; ++e) {
      EpochMetrics m;
      m.epoch = e;
      m.step = e;
      m.lr = 0.01f;
      m.rec = 1.5f - 0.1f * float(e);
      m.max_mi = 1.0f;
      m.min_mi = 0.0f;
      m.approx = 1.0f;
      m.gate_open = false;
      w.write_row(m);
    }
  }
  auto files = write_metric_plots("io_tmp/toplot.csv", "io_tmp/plots", 0.5f);
  CHECK(files.size() >= 5);
  const std::string rec_svg = slurp("io_tmp/plots/rec.svg");
  CHECK(rec_svg.find("class=\"threshold\"") != std::string::npos);
  CHECK(rec_svg.find("threshold 0.5") != std::string::npos);
  for (const auto& f : files) CHECK(xml_well_formed(slurp(f)));

  spit("io_tmp/empty.csv", std::string(kMetricsHeader) + "\n");
  CHECK_THROWS_AS(write_metric_plots("io_tmp/empty.csv", "io_tmp/plots2", 0.5f), FormatError);
  CHECK(!std::filesystem::exists("io_tmp/plots2/rec.svg"));

  spit("io_tmp/bad.csv", std::string(kMetricsHeader) + "\n1,1,x,1,1,1,1,0,\n");
  CHECK_THROWS_AS(write_metric_plots("io_tmp/bad.csv", "io_tmp/plots3", 0.5f), FormatError);
}

TEST_CASE("IDX import round-trips through the dataset format") {
  std::filesystem::create_directories("io_tmp");
  // tiny 3-image 4x4 IDX pair
  auto be32 = [](uint32_t v) {
    std::string s(4, '\0');
    for (int i = 0; i < 4; ++i) s[size_t(3 - i)] = char((v >> (8 * i)) & 0xff);
    return s;
  };
  std::string imgs = be32(0x803) + be32(3) + be32(4) + be32(4);
  for (int i = 0; i < 3 * 16; ++i) imgs += char(i & 0xff);
  std::string labs = be32(0x801) + be32(3);
  labs += char(0);
  labs += char(1);
  labs += char(1);
  spit("io_tmp/t.idx3", imgs);
  spit("io_tmp/t.idx1", labs);

  Dataset d = import_idx("io_tmp/t.idx3", "io_tmp/t.idx1");
  CHECK(d.count == 3);
  CHECK(d.height == 4);
  CHECK(d.label_count == 2);
  CHECK(d.pixels[0] == 0.0f);
  CHECK(d.pixels[1] == doctest::Approx(1.0f / 255.0f));
  CHECK(d.labels[2] == 1);

  spit("io_tmp/badmagic.idx3", be32(0x802) + imgs.substr(4));
  CHECK_THROWS_AS(import_idx("io_tmp/badmagic.idx3", "io_tmp/t.idx1"), FormatError);
}
