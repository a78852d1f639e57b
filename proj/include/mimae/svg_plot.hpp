#pragma once

#include <string>
#include <vector>

namespace mimae {

// One SVG line chart; threshold draws a labeled horizontal rule when finite.
std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::vector<double>& xs, const std::vector<double>& ys,
                              double threshold);

// Emits one SVG per numeric metric column into out_dir (<column>.svg). The
// reconstruction plot carries the gate threshold line. A header-only CSV is
// an error, not an empty chart.
std::vector<std::string> write_metric_plots(const std::string& metrics_csv_path,
                                            const std::string& out_dir, float epsilon_l);

}  // namespace mimae
