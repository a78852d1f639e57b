#include "mimae/pipeline.hpp"

#include <filesystem>

#include "mimae/checkpoint.hpp"
#include "mimae/dataset.hpp"
#include "mimae/svg_plot.hpp"

namespace mimae {

namespace {

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

}  // namespace

void pipeline_gen_data(const RunConfig& cfg) {
  cfg.validate();
  Dataset data;
  if (!cfg.idx_images.empty() || !cfg.idx_labels.empty()) {
    if (cfg.idx_images.empty() || cfg.idx_labels.empty())
      throw ConfigError("IDX import needs both idx_images and idx_labels");
    data = import_idx(cfg.idx_images, cfg.idx_labels);
  } else {
    SyntheticSpec spec;
    spec.num_images = cfg.num_images;
    spec.image_size = cfg.image_size;
    spec.channels = cfg.channels;
    spec.class_count = cfg.class_count;
    spec.seed = cfg.data_seed;
    data = gen_synthetic(spec);
  }
  ensure_parent_dir(cfg.dataset_path);
  save_dataset(data, cfg.dataset_path);
}

void pipeline_pretrain(const RunConfig& cfg, const Trainer::EpochCallback& cb) {
  cfg.validate();
  Dataset data = load_dataset(cfg.dataset_path);
  Trainer trainer(cfg, data);
  if (!cfg.resume_path.empty()) {
    trainer.resume_from(load_checkpoint(cfg.resume_path));
  }
  ensure_parent_dir(cfg.metrics_file());
  ensure_parent_dir(cfg.checkpoint_file());
  MetricsWriter metrics(cfg.metrics_file());
  trainer.run_pretrain(&metrics, cb);
}

ProbeResult pipeline_probe(const RunConfig& cfg) {
  cfg.validate();
  Dataset data = load_dataset(cfg.dataset_path);
  Trainer trainer(cfg, data);
  trainer.resume_from(load_checkpoint(cfg.checkpoint_file()));
  return linear_probe(trainer.model(), data, cfg);
}

SandwichReport pipeline_mi_bench(const RunConfig& cfg) {
  cfg.loss_weights().validate();
  SandwichReport report = sandwich_report(cfg.mi_rho_list(), cfg.mi_dim, cfg.mi_samples, cfg.mi_seed,
                                          MiBenchOptions::from_config(cfg));
  ensure_parent_dir(cfg.mi_report_file());
  write_sandwich_csv(report, cfg.mi_report_file());
  return report;
}

std::vector<std::string> pipeline_plot(const RunConfig& cfg) {
  return write_metric_plots(cfg.metrics_file(), cfg.plots_dir(), cfg.epsilon_l);
}

}  // namespace mimae
