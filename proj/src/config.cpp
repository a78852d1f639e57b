#include "mimae/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace mimae {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(unsigned(s[a]))) ++a;
  while (b > a && std::isspace(unsigned(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string fmt_float(float v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", double(v));
  return buf;
}

struct Field {
  std::string name;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;  // throws ConfigError (no location)
};

void parse_int_into(const std::string& v, int& out, int lo, int hi) {
  int x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  if (x < lo || x > hi)
    throw ConfigError("value " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  out = x;
}

void parse_u64_into(const std::string& v, uint64_t& out) {
  uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("expected an unsigned integer, got '" + v + "'");
  out = x;
}

void parse_float_into(const std::string& v, float& out, double lo, double hi, bool lo_open, bool hi_open) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty()) throw ConfigError("expected a number, got '" + v + "'");
  if (!std::isfinite(x)) throw ConfigError("value must be finite");
  const bool below = lo_open ? x <= lo : x < lo;
  const bool above = hi_open ? x >= hi : x > hi;
  if (below || above) {
    std::ostringstream os;
    os << "value " << v << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi
       << (hi_open ? ")" : "]");
    throw ConfigError(os.str());
  }
  out = float(x);
}

void parse_bool_into(const std::string& v, bool& out) {
  if (v == "true" || v == "1") out = true;
  else if (v == "false" || v == "0") out = false;
  else throw ConfigError("expected true/false, got '" + v + "'");
}

const double kInf = 1e300;

std::vector<Field> build_registry() {
  std::vector<Field> f;
  auto add = [&f](std::string name, std::string doc, std::function<std::string(const RunConfig&)> get,
                  std::function<void(RunConfig&, const std::string&)> set) {
    f.push_back({std::move(name), std::move(doc), std::move(get), std::move(set)});
  };
  auto add_int = [&](std::string name, int RunConfig::* memb, int lo, int hi, std::string doc) {
    add(std::move(name), std::move(doc),
        [memb](const RunConfig& c) { return std::to_string(c.*memb); },
        [memb, lo, hi](RunConfig& c, const std::string& v) { parse_int_into(v, c.*memb, lo, hi); });
  };
  auto add_u64 = [&](std::string name, uint64_t RunConfig::* memb, std::string doc) {
    add(std::move(name), std::move(doc),
        [memb](const RunConfig& c) { return std::to_string(c.*memb); },
        [memb](RunConfig& c, const std::string& v) { parse_u64_into(v, c.*memb); });
  };
  auto add_float = [&](std::string name, float RunConfig::* memb, double lo, double hi, bool lo_open,
                       bool hi_open, std::string doc) {
    add(std::move(name), std::move(doc),
        [memb](const RunConfig& c) { return fmt_float(c.*memb); },
        [memb, lo, hi, lo_open, hi_open](RunConfig& c, const std::string& v) {
          parse_float_into(v, c.*memb, lo, hi, lo_open, hi_open);
        });
  };
  auto add_bool = [&](std::string name, bool RunConfig::* memb, std::string doc) {
    add(std::move(name), std::move(doc),
        [memb](const RunConfig& c) { return (c.*memb) ? "true" : "false"; },
        [memb](RunConfig& c, const std::string& v) { parse_bool_into(v, c.*memb); });
  };
  auto add_str = [&](std::string name, std::string RunConfig::* memb, std::string doc) {
    add(std::move(name), std::move(doc),
        [memb](const RunConfig& c) { return c.*memb; },
        [memb](RunConfig& c, const std::string& v) { c.*memb = v; });
  };

  // data
  add_str("dataset_path", &RunConfig::dataset_path, "dataset file (MIMDS1 format)");
  add_int("num_images", &RunConfig::num_images, 1, 10000000, "synthetic dataset size");
  add_int("image_size", &RunConfig::image_size, 4, 4096, "square image side in pixels");
  add_int("channels", &RunConfig::channels, 1, 16, "image channels");
  add_int("class_count", &RunConfig::class_count, 1, 65535, "synthetic class count");
  add_u64("data_seed", &RunConfig::data_seed, "synthetic generator seed");
  add_str("idx_images", &RunConfig::idx_images, "optional IDX image file to import instead of synthesizing");
  add_str("idx_labels", &RunConfig::idx_labels, "optional IDX label file (with idx_images)");

  // model
  add_int("patch_size", &RunConfig::patch_size, 1, 1024, "patch side in pixels");
  add_int("embed_dim", &RunConfig::embed_dim, 2, 8192, "encoder width");
  add_int("encoder_depth", &RunConfig::encoder_depth, 1, 128, "encoder transformer blocks");
  add_int("decoder_dim", &RunConfig::decoder_dim, 2, 8192, "decoder width");
  add_int("decoder_depth", &RunConfig::decoder_depth, 1, 128, "decoder transformer blocks");
  add_int("num_heads", &RunConfig::num_heads, 1, 64, "attention heads");
  add_int("latent_dim", &RunConfig::latent_dim, 2, 8192, "pooled latent width (must equal embed_dim)");
  add_int("approx_hidden_dim", &RunConfig::approx_hidden_dim, 1, 8192, "approximation net hidden width");
  add_float("sigma_floor", &RunConfig::sigma_floor, 0.0, kInf, true, false, "stddev floor of q(z|x)");
  add("latent_pooling", "class_token | mean_pool",
      [](const RunConfig& c) {
        return c.latent_pooling == LatentPooling::class_token ? "class_token" : "mean_pool";
      },
      [](RunConfig& c, const std::string& v) {
        if (v == "class_token") c.latent_pooling = LatentPooling::class_token;
        else if (v == "mean_pool") c.latent_pooling = LatentPooling::mean_pool;
        else throw ConfigError("expected class_token|mean_pool, got '" + v + "'");
      });
  add_bool("norm_pix", &RunConfig::norm_pix, "per-patch pixel normalization of targets");

  // masking
  add_float("mask_ratio", &RunConfig::mask_ratio, 0.0, 1.0, true, true, "masked fraction of patches");
  add("mask_count_mode", "complete | fixed4 (number of masks per image)",
      [](const RunConfig& c) { return c.mask_count_mode == MaskCountMode::complete ? "complete" : "fixed4"; },
      [](RunConfig& c, const std::string& v) {
        if (v == "complete") c.mask_count_mode = MaskCountMode::complete;
        else if (v == "fixed4") c.mask_count_mode = MaskCountMode::fixed4;
        else throw ConfigError("expected complete|fixed4, got '" + v + "'");
      });
  add("mask_gen", "orthogonal | independent",
      [](const RunConfig& c) { return c.mask_gen == MaskStrategy::orthogonal ? "orthogonal" : "independent"; },
      [](RunConfig& c, const std::string& v) {
        if (v == "orthogonal") c.mask_gen = MaskStrategy::orthogonal;
        else if (v == "independent") c.mask_gen = MaskStrategy::independent;
        else throw ConfigError("expected orthogonal|independent, got '" + v + "'");
      });

  // loss
  add_float("lambda1", &RunConfig::lambda1, 0.0, kInf, false, false, "reconstruction weight");
  add_float("lambda2", &RunConfig::lambda2, 0.0, kInf, false, false, "MI maximization weight");
  add_float("lambda3", &RunConfig::lambda3, 0.0, kInf, false, false, "MI minimization weight");
  add_float("tau", &RunConfig::tau, 0.0, kInf, true, false, "InfoNCE temperature");
  add_float("epsilon_l", &RunConfig::epsilon_l, 0.0, kInf, true, false, "gate threshold on rec loss");
  add("gate_mode", "latching | per_batch",
      [](const RunConfig& c) { return c.gate_mode == GateMode::latching ? "latching" : "per_batch"; },
      [](RunConfig& c, const std::string& v) {
        if (v == "latching") c.gate_mode = GateMode::latching;
        else if (v == "per_batch") c.gate_mode = GateMode::per_batch;
        else throw ConfigError("expected latching|per_batch, got '" + v + "'");
      });
  add_bool("gate_initial_open", &RunConfig::gate_initial_open, "start with the MI losses enabled");

  // training
  add_int("epochs", &RunConfig::epochs, 1, 1000000, "pretraining epochs");
  add_int("batch_size", &RunConfig::batch_size, 2, 1000000, "images per step (InfoNCE needs >= 2)");
  add_float("base_lr", &RunConfig::base_lr, 0.0, kInf, true, false, "peak learning rate");
  add_float("min_lr", &RunConfig::min_lr, 0.0, kInf, false, false, "cosine floor");
  add_float("warmup_frac", &RunConfig::warmup_frac, 0.0, 1.0, false, true, "warmup fraction of steps");
  add_float("weight_decay", &RunConfig::weight_decay, 0.0, kInf, false, false, "AdamW weight decay");
  add_float("beta1", &RunConfig::beta1, 0.0, 1.0, false, true, "AdamW beta1");
  add_float("beta2", &RunConfig::beta2, 0.0, 1.0, false, true, "AdamW beta2");
  add_float("adam_eps", &RunConfig::adam_eps, 0.0, kInf, true, false, "AdamW epsilon");
  add_float("approx_lr", &RunConfig::approx_lr, 0.0, kInf, true, false, "approximation net learning rate");
  add_float("approx_weight_decay", &RunConfig::approx_weight_decay, 0.0, kInf, false, false,
            "approximation net weight decay");
  add_u64("seed", &RunConfig::seed, "master training seed");
  add_str("checkpoint_path", &RunConfig::checkpoint_path, "checkpoint file; empty -> <out_dir>/checkpoint.mimae");
  add_int("checkpoint_every", &RunConfig::checkpoint_every, 0, 1000000, "epochs between checkpoints (0 = final only)");
  add_str("metrics_path", &RunConfig::metrics_path, "metrics CSV; empty -> <out_dir>/metrics.csv");
  add_str("resume_path", &RunConfig::resume_path, "checkpoint to resume pretraining from");
  add_str("out_dir", &RunConfig::out_dir, "default output directory");

  // probe
  add_int("probe_epochs", &RunConfig::probe_epochs, 1, 1000000, "linear probe epochs");
  add_float("probe_lr", &RunConfig::probe_lr, 0.0, kInf, true, false, "probe SGD learning rate");
  add_float("probe_train_frac", &RunConfig::probe_train_frac, 0.0, 1.0, true, true, "probe train split");
  add_u64("probe_seed", &RunConfig::probe_seed, "probe split/init seed");
  add_int("probe_batch", &RunConfig::probe_batch, 1, 1000000, "probe minibatch size");

  // mi bench
  add_str("mi_rhos", &RunConfig::mi_rhos, "comma-separated correlations to test");
  add_int("mi_dim", &RunConfig::mi_dim, 1, 4096, "Gaussian pair dimension");
  add_int("mi_samples", &RunConfig::mi_samples, 100, 100000000, "sample count per rho");
  add_int("mi_batch", &RunConfig::mi_batch, 2, 1000000, "InfoNCE batch size");
  add_float("mi_tau", &RunConfig::mi_tau, 0.0, kInf, true, false, "InfoNCE critic temperature");
  add_u64("mi_seed", &RunConfig::mi_seed, "MI bench seed");
  add_int("mi_club_epochs", &RunConfig::mi_club_epochs, 1, 1000000, "CLUB approximation training epochs");
  add_int("mi_nce_epochs", &RunConfig::mi_nce_epochs, 1, 1000000, "InfoNCE critic training epochs");
  add_int("mi_hidden", &RunConfig::mi_hidden, 1, 8192, "estimator hidden width");
  add_str("mi_report_path", &RunConfig::mi_report_path, "sandwich CSV; empty -> <out_dir>/mi_report.csv");
  add_float("mi_delta", &RunConfig::mi_delta, 0.0, kInf, true, false, "sandwich slack in nats");

  // plots
  add_str("plot_dir", &RunConfig::plot_dir, "SVG output directory; empty -> <out_dir>/plots");
  return f;
}

const std::vector<Field>& registry() {
  static const std::vector<Field> f = build_registry();
  return f;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : registry())
    if (f.name == key) return &f;
  return nullptr;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.image_size = image_size;
  m.channels = channels;
  m.patch_size = patch_size;
  m.embed_dim = embed_dim;
  m.encoder_depth = encoder_depth;
  m.decoder_dim = decoder_dim;
  m.decoder_depth = decoder_depth;
  m.num_heads = num_heads;
  m.latent_dim = latent_dim;
  m.approx_hidden_dim = approx_hidden_dim;
  m.sigma_floor = sigma_floor;
  m.pooling = latent_pooling;
  return m;
}

LossWeights RunConfig::loss_weights() const {
  LossWeights w;
  w.lambda1 = lambda1;
  w.lambda2 = lambda2;
  w.lambda3 = lambda3;
  w.tau = tau;
  w.epsilon_l = epsilon_l;
  return w;
}

std::string RunConfig::metrics_file() const {
  return metrics_path.empty() ? out_dir + "/metrics.csv" : metrics_path;
}
std::string RunConfig::checkpoint_file() const {
  return checkpoint_path.empty() ? out_dir + "/checkpoint.mimae" : checkpoint_path;
}
std::string RunConfig::mi_report_file() const {
  return mi_report_path.empty() ? out_dir + "/mi_report.csv" : mi_report_path;
}
std::string RunConfig::plots_dir() const { return plot_dir.empty() ? out_dir + "/plots" : plot_dir; }

std::vector<float> RunConfig::mi_rho_list() const {
  std::vector<float> out;
  std::string cur;
  std::istringstream is(mi_rhos);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (cur.empty()) continue;
    char* end = nullptr;
    const double x = std::strtod(cur.c_str(), &end);
    if (end != cur.c_str() + cur.size() || !(std::abs(x) < 1.0))
      throw ConfigError("mi_rhos: '" + cur + "' is not a correlation in (-1, 1)");
    out.push_back(float(x));
  }
  if (out.empty()) throw ConfigError("mi_rhos: no correlations given");
  return out;
}

void RunConfig::validate() const {
  model_config().validate();
  loss_weights().validate();
  if (image_size % patch_size != 0)
    throw ConfigError("image_size must be divisible by patch_size");
  const int P = model_config().num_patches();
  const int N = masks_per_image();
  if (mask_gen == MaskStrategy::orthogonal && P < N)
    throw ConfigError("orthogonal masking needs num_patches >= masks_per_image (" + std::to_string(P) +
                      " < " + std::to_string(N) + ")");
  if (num_images < batch_size)
    throw ConfigError("num_images must be at least batch_size");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      f->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(trim(key));
  if (!f) throw ConfigError("unknown key '" + trim(key) + "'");
  try {
    f->set(cfg, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + trim(key) + "': " + e.what());
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const Field& f : registry()) os << f.name << " = " << f.get(cfg) << "\n";
  return os.str();
}

std::vector<ConfigKeyInfo> config_keys(const RunConfig& cfg) {
  std::vector<ConfigKeyInfo> out;
  for (const Field& f : registry()) out.push_back({f.name, f.get(cfg), f.doc});
  return out;
}

}  // namespace mimae
