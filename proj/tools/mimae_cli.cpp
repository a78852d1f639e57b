// Command-line front end. Links only the C API of the shared library.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mimae/capi.h"

namespace {

struct ConfigHandle {
  mimae_config* ptr = nullptr;
  ~ConfigHandle() { mimae_config_free(ptr); }
};

int fail(mimae_status status) {
  std::fprintf(stderr, "mimae-cli: error: %s: %s\n", mimae_status_name(status), mimae_last_error());
  return int(status);
}

int build_config(const std::string& config_path, const std::vector<std::string>& sets,
                 ConfigHandle& out) {
  mimae_status st =
      config_path.empty() ? mimae_config_create(&out.ptr) : mimae_config_load(config_path.c_str(), &out.ptr);
  if (st != MIMAE_OK) return fail(st);
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "mimae-cli: error: invalid-argument: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return int(MIMAE_ERR_INVALID_ARGUMENT);
    }
    st = mimae_config_set(out.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != MIMAE_OK) return fail(st);
  }
  return 0;
}

void print_epoch(const mimae_epoch_stats* s, void*) {
  std::printf("epoch %lld step %lld lr %.6g rec %.6g max_mi %.6g min_mi %.6g approx %.6g gate %d\n",
              s->epoch, s->step, double(s->lr), double(s->rec), double(s->max_mi), double(s->min_mi),
              double(s->approx), s->gate_open);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MI-MAE pretraining, probing, MI verification and plotting"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::vector<std::string> sets;
  bool list_keys = false;
  bool quiet = false;
  app.add_option("--config", config_path, "config file (key = value lines)");
  app.add_option("--set", sets, "override a config key (key=value, repeatable)");
  app.add_flag("--keys", list_keys, "list every config key with value and doc, then exit");
  app.add_flag("--quiet", quiet, "suppress per-epoch progress output");
  app.set_version_flag("--version", std::string(mimae_version()));

  auto* gen = app.add_subcommand("gen-data", "generate (or import) the dataset");
  auto* pre = app.add_subcommand("pretrain", "run MI-MAE pretraining");
  auto* probe = app.add_subcommand("probe", "linear-probe a checkpoint");
  auto* bench = app.add_subcommand("mi-bench", "mutual-information sandwich benchmark");
  auto* plot = app.add_subcommand("plot", "render metric SVG charts");

  CLI11_PARSE(app, argc, argv);

  ConfigHandle cfg;
  if (int rc = build_config(config_path, sets, cfg)) return rc;

  if (list_keys) {
    mimae_status st = mimae_config_keys(
        cfg.ptr,
        [](const char* key, const char* value, const char* doc, void*) {
          std::printf("%-22s = %-28s # %s\n", key, value, doc);
        },
        nullptr);
    return st == MIMAE_OK ? 0 : fail(st);
  }

  if (gen->parsed()) {
    const mimae_status st = mimae_gen_data(cfg.ptr);
    if (st != MIMAE_OK) return fail(st);
    std::printf("dataset written\n");
    return 0;
  }
  if (pre->parsed()) {
    const mimae_status st = mimae_pretrain(cfg.ptr, quiet ? nullptr : print_epoch, nullptr);
    if (st != MIMAE_OK) return fail(st);
    std::printf("pretraining complete\n");
    return 0;
  }
  if (probe->parsed()) {
    float acc = 0.0f;
    const mimae_status st = mimae_probe(cfg.ptr, &acc);
    if (st != MIMAE_OK) return fail(st);
    std::printf("probe accuracy %.4f\n", double(acc));
    return 0;
  }
  if (bench->parsed()) {
    int all_pass = 0;
    const mimae_status st = mimae_mi_bench(cfg.ptr, &all_pass);
    if (st != MIMAE_OK) return fail(st);
    std::printf("mi-bench report written (all bounds %s)\n", all_pass ? "met" : "NOT met");
    return 0;
  }
  if (plot->parsed()) {
    const mimae_status st = mimae_plot(cfg.ptr);
    if (st != MIMAE_OK) return fail(st);
    std::printf("plots written\n");
    return 0;
  }

  std::fprintf(stderr, "mimae-cli: error: invalid-argument: no subcommand given (see --help)\n");
  return int(MIMAE_ERR_INVALID_ARGUMENT);
}
