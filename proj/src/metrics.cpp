#include "mimae/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "mimae/tensor.hpp"

namespace mimae {

namespace {

std::string fmt(float v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", double(v));
  return buf;
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  out_.open(path, std::ios::trunc);
  if (!out_) throw IoError("cannot open metrics file '" + path + "' for writing");
  out_ << kMetricsHeader << "\n";
  out_.flush();
}

std::string format_metrics_row(const EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << ',' << m.step << ',' << fmt(m.lr) << ',' << fmt(m.rec) << ',' << fmt(m.max_mi)
     << ',' << fmt(m.min_mi) << ',' << fmt(m.approx) << ',' << (m.gate_open ? 1 : 0) << ',';
  if (m.probe_acc >= 0.0) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", m.probe_acc);
    os << buf;
  }
  return os.str();
}

void MetricsWriter::write_row(const EpochMetrics& m) {
  out_ << format_metrics_row(m) << "\n";
  out_.flush();
  if (!out_) throw IoError("write failed for metrics file '" + path_ + "'");
}

int MetricsTable::column(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return int(i);
  return -1;
}

MetricsTable parse_metrics_csv(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  MetricsTable t;
  if (!std::getline(is, line)) throw FormatError(origin + ": empty file, expected a CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::istringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
  if (t.columns.empty()) throw FormatError(origin + ": header row has no columns");

  int row_index = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row_index;
    std::vector<std::string> row;
    std::istringstream rs(line);
    // getline drops a trailing empty cell; count separators instead
    size_t start = 0;
    for (;;) {
      const size_t comma = line.find(',', start);
      row.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != t.columns.size())
      throw FormatError(origin + ": row " + std::to_string(row_index) + " has " +
                        std::to_string(row.size()) + " cells, expected " +
                        std::to_string(t.columns.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

MetricsTable load_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics CSV '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_metrics_csv(os.str(), path);
}

}  // namespace mimae
