#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mimae/config.hpp"
#include "mimae/metrics.hpp"
#include "mimae/miverify.hpp"
#include "mimae/trainer.hpp"

namespace mimae {

// Subcommand bodies shared by the C API and tests.

// Synthesizes (or imports from IDX) the dataset at cfg.dataset_path.
void pipeline_gen_data(const RunConfig& cfg);

// Full pretraining run: dataset load, optional resume, metrics + checkpoints.
void pipeline_pretrain(const RunConfig& cfg, const Trainer::EpochCallback& cb = {});

// Linear probe of the checkpointed encoder on the dataset's labels.
ProbeResult pipeline_probe(const RunConfig& cfg);

// MI sandwich bench; writes the CSV report and returns it.
SandwichReport pipeline_mi_bench(const RunConfig& cfg);

// Renders metric SVGs; returns written paths.
std::vector<std::string> pipeline_plot(const RunConfig& cfg);

}  // namespace mimae
