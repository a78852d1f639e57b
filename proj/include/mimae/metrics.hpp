#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace mimae {

struct EpochMetrics {
  int64_t epoch = 0;
  int64_t step = 0;
  float lr = 0.0f;
  float rec = 0.0f;
  float max_mi = 0.0f;
  float min_mi = 0.0f;
  float approx = 0.0f;
  bool gate_open = false;
  double probe_acc = -1.0;  // < 0 means not measured (empty cell)
};

inline const char* kMetricsHeader = "epoch,step,lr,rec,max_mi,min_mi,approx,gate_open,probe_acc";

// One CSV row per epoch; header always present; rows flushed as written.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write_row(const EpochMetrics& m);
  const std::string& path() const { return path_; }

 private:
  std::ofstream out_;
  std::string path_;
};

std::string format_metrics_row(const EpochMetrics& m);

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when missing
};

// Parse errors carry the 1-based data row index.
MetricsTable parse_metrics_csv(const std::string& text, const std::string& origin);
MetricsTable load_metrics_csv(const std::string& path);

}  // namespace mimae
