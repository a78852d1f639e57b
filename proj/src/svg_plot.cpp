#include "mimae/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mimae/metrics.hpp"
#include "mimae/tensor.hpp"

namespace mimae {

namespace {

constexpr int kWidth = 640, kHeight = 400;
constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::vector<double>& xs, const std::vector<double>& ys,
                              double threshold) {
  if (xs.empty() || xs.size() != ys.size())
    throw ContractError("render_line_chart: need matching, nonempty series");

  double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
  for (size_t i = 0; i < xs.size(); ++i) {
    xmin = std::min(xmin, xs[i]);
    xmax = std::max(xmax, xs[i]);
    ymin = std::min(ymin, ys[i]);
    ymax = std::max(ymax, ys[i]);
  }
  if (std::isfinite(threshold)) {
    ymin = std::min(ymin, threshold);
    ymax = std::max(ymax, threshold);
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << kWidth / 2 << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"16\" "
        "text-anchor=\"middle\">"
     << escape_xml(title) << "</text>\n";

  // axes
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw
     << "\" y2=\"" << kTop + ph << "\" stroke=\"black\"/>\n";
  os << "  <text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << escape_xml(x_label)
     << "</text>\n";

  // tick labels
  os << "  <text x=\"" << kLeft << "\" y=\"" << kTop + ph + 16
     << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xmin)
     << "</text>\n";
  os << "  <text x=\"" << kLeft + pw << "\" y=\"" << kTop + ph + 16
     << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xmax)
     << "</text>\n";
  os << "  <text x=\"" << kLeft - 6 << "\" y=\"" << py(ymin) + 4
     << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(ymin)
     << "</text>\n";
  os << "  <text x=\"" << kLeft - 6 << "\" y=\"" << py(ymax) + 4
     << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(ymax)
     << "</text>\n";

  if (std::isfinite(threshold)) {
    os << "  <line class=\"threshold\" x1=\"" << kLeft << "\" y1=\"" << py(threshold) << "\" x2=\""
       << kLeft + pw << "\" y2=\"" << py(threshold)
       << "\" stroke=\"red\" stroke-dasharray=\"6,4\"/>\n";
    os << "  <text x=\"" << kLeft + pw - 4 << "\" y=\"" << py(threshold) - 5
       << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"red\" text-anchor=\"end\">threshold "
       << num(threshold) << "</text>\n";
  }

  os << "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ' ';
    os << num(px(xs[i])) << ',' << num(py(ys[i]));
  }
  os << "\"/>\n";
  if (xs.size() == 1)
    os << "  <circle cx=\"" << num(px(xs[0])) << "\" cy=\"" << num(py(ys[0]))
       << "\" r=\"3\" fill=\"steelblue\"/>\n";
  os << "</svg>\n";
  return os.str();
}

std::vector<std::string> write_metric_plots(const std::string& metrics_csv_path,
                                            const std::string& out_dir, float epsilon_l) {
  MetricsTable table = load_metrics_csv(metrics_csv_path);
  if (table.rows.empty())
    throw FormatError(metrics_csv_path + ": no data rows to plot");
  const int epoch_col = table.column("epoch");
  if (epoch_col < 0) throw FormatError(metrics_csv_path + ": missing 'epoch' column");

  std::filesystem::create_directories(out_dir);

  auto parse_cell = [&](const std::string& cell, size_t row) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size())
      throw FormatError(metrics_csv_path + ": row " + std::to_string(row + 1) +
                        ": non-numeric cell '" + cell + "'");
    return v;
  };

  std::vector<double> epochs;
  for (size_t r = 0; r < table.rows.size(); ++r)
    epochs.push_back(parse_cell(table.rows[r][size_t(epoch_col)], r));

  std::vector<std::string> written;
  for (size_t c = 0; c < table.columns.size(); ++c) {
    const std::string& name = table.columns[c];
    if (name == "epoch" || name == "step") continue;
    // a column that is entirely empty (e.g. probe_acc never measured) is skipped
    bool any = false;
    for (const auto& row : table.rows) any = any || !row[c].empty();
    if (!any) continue;
    std::vector<double> xs, ys;
    for (size_t r = 0; r < table.rows.size(); ++r) {
      if (table.rows[r][c].empty()) continue;
      xs.push_back(epochs[r]);
      ys.push_back(parse_cell(table.rows[r][c], r));
    }
    const double threshold = (name == "rec") ? double(epsilon_l) : std::nan("");
    const std::string svg = render_line_chart(name + " per epoch", "epoch", xs, ys, threshold);
    const std::string path = out_dir + "/" + name + ".svg";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open plot file '" + path + "'");
    out << svg;
    if (!out) throw IoError("write failed for plot file '" + path + "'");
    written.push_back(path);
  }
  return written;
}

}  // namespace mimae
