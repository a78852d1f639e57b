#include "mimae/capi.h"

#include <cstring>
#include <fstream>
#include <string>

#include "mimae/config.hpp"
#include "mimae/pipeline.hpp"

struct mimae_config {
  mimae::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
mimae_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MIMAE_OK;
  } catch (const mimae::ConfigError& e) {
    g_last_error = e.what();
    return MIMAE_ERR_CONFIG;
  } catch (const mimae::FormatError& e) {
    g_last_error = e.what();
    return MIMAE_ERR_FORMAT;
  } catch (const mimae::IoError& e) {
    g_last_error = e.what();
    return MIMAE_ERR_IO;
  } catch (const mimae::NumericError& e) {
    g_last_error = e.what();
    return MIMAE_ERR_NUMERIC;
  } catch (const mimae::DimensionError& e) {
    g_last_error = e.what();
    return MIMAE_ERR_INVALID_ARGUMENT;
  } catch (const mimae::ContractError& e) {
    g_last_error = e.what();
    return MIMAE_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MIMAE_ERR_INTERNAL;
  }
}

mimae_status bad_argument(const char* msg) {
  g_last_error = msg;
  return MIMAE_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* mimae_version(void) { return "1.0.0"; }

const char* mimae_status_name(mimae_status status) {
  switch (status) {
    case MIMAE_OK: return "ok";
    case MIMAE_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case MIMAE_ERR_CONFIG: return "config";
    case MIMAE_ERR_IO: return "io";
    case MIMAE_ERR_FORMAT: return "format";
    case MIMAE_ERR_NUMERIC: return "numeric";
    case MIMAE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mimae_last_error(void) { return g_last_error.c_str(); }

mimae_status mimae_config_create(mimae_config** out) {
  if (!out) return bad_argument("mimae_config_create: out is NULL");
  return guarded([&] { *out = new mimae_config(); });
}

mimae_status mimae_config_load(const char* path, mimae_config** out) {
  if (!path || !out) return bad_argument("mimae_config_load: NULL argument");
  return guarded([&] {
    auto* c = new mimae_config();
    try {
      c->cfg = mimae::load_config(path);
    } catch (...) {
      delete c;
      throw;
    }
    *out = c;
  });
}

mimae_status mimae_config_set(mimae_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return bad_argument("mimae_config_set: NULL argument");
  return guarded([&] { mimae::apply_override(cfg->cfg, key, value); });
}

mimae_status mimae_config_get(const mimae_config* cfg, const char* key, char* buf, size_t buf_len) {
  if (!cfg || !key || !buf) return bad_argument("mimae_config_get: NULL argument");
  return guarded([&] {
    for (const auto& info : mimae::config_keys(cfg->cfg)) {
      if (info.key == key) {
        if (info.value.size() + 1 > buf_len)
          throw mimae::ContractError("mimae_config_get: buffer needs " +
                                     std::to_string(info.value.size() + 1) + " bytes");
        std::memcpy(buf, info.value.c_str(), info.value.size() + 1);
        return;
      }
    }
    throw mimae::ConfigError(std::string("unknown key '") + key + "'");
  });
}

mimae_status mimae_config_keys(const mimae_config* cfg, mimae_key_fn fn, void* user_data) {
  if (!cfg || !fn) return bad_argument("mimae_config_keys: NULL argument");
  return guarded([&] {
    for (const auto& info : mimae::config_keys(cfg->cfg))
      fn(info.key.c_str(), info.value.c_str(), info.doc.c_str(), user_data);
  });
}

mimae_status mimae_config_save(const mimae_config* cfg, const char* path) {
  if (!cfg || !path) return bad_argument("mimae_config_save: NULL argument");
  return guarded([&] {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw mimae::IoError(std::string("cannot open '") + path + "' for writing");
    out << mimae::serialize_config(cfg->cfg);
    if (!out) throw mimae::IoError(std::string("write failed for '") + path + "'");
  });
}

void mimae_config_free(mimae_config* cfg) { delete cfg; }

mimae_status mimae_gen_data(const mimae_config* cfg) {
  if (!cfg) return bad_argument("mimae_gen_data: cfg is NULL");
  return guarded([&] { mimae::pipeline_gen_data(cfg->cfg); });
}

mimae_status mimae_pretrain(const mimae_config* cfg, mimae_progress_fn progress, void* user_data) {
  if (!cfg) return bad_argument("mimae_pretrain: cfg is NULL");
  return guarded([&] {
    mimae::Trainer::EpochCallback cb;
    if (progress) {
      cb = [progress, user_data](const mimae::EpochMetrics& m) {
        mimae_epoch_stats s;
        s.epoch = m.epoch;
        s.step = m.step;
        s.lr = m.lr;
        s.rec = m.rec;
        s.max_mi = m.max_mi;
        s.min_mi = m.min_mi;
        s.approx = m.approx;
        s.gate_open = m.gate_open ? 1 : 0;
        progress(&s, user_data);
      };
    }
    mimae::pipeline_pretrain(cfg->cfg, cb);
  });
}

mimae_status mimae_probe(const mimae_config* cfg, float* accuracy_out) {
  if (!cfg || !accuracy_out) return bad_argument("mimae_probe: NULL argument");
  return guarded([&] { *accuracy_out = float(mimae::pipeline_probe(cfg->cfg).accuracy); });
}

mimae_status mimae_mi_bench(const mimae_config* cfg, int* all_pass_out) {
  if (!cfg) return bad_argument("mimae_mi_bench: cfg is NULL");
  return guarded([&] {
    const mimae::SandwichReport report = mimae::pipeline_mi_bench(cfg->cfg);
    if (all_pass_out) *all_pass_out = report.all_pass() ? 1 : 0;
  });
}

mimae_status mimae_plot(const mimae_config* cfg) {
  if (!cfg) return bad_argument("mimae_plot: cfg is NULL");
  return guarded([&] { mimae::pipeline_plot(cfg->cfg); });
}

}  // extern "C"
