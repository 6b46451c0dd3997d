#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kquad/csv.hpp"

namespace kquad {

/// Which CSV column a plotted series reads. "auto" prefers mean_abs_err
/// when present, otherwise the method's own MMD column (mmd_bq for the
/// BQ-weighted methods, mmd_uniform for the uniform ones).
inline std::optional<double> plot_value(const CsvRow& row, const std::string& column) {
  if (column == "mmd_uniform") return row.mmd_uniform;
  if (column == "mmd_bq") return row.mmd_bq;
  if (column == "mean_abs_err") return row.mean_abs_err;
  if (column == "bound") return row.bound;
  if (column == "auto") {
    if (row.mean_abs_err) return row.mean_abs_err;
    if (row.method == "sbq" || row.method == "herding-bq-reweight") return row.mmd_bq;
    return row.mmd_uniform;
  }
  throw std::invalid_argument("unknown plot column: " + column);
}

/// Log-log line chart of a results CSV, one series per method, values
/// averaged across seeds. A pure file transform.
inline void cmd_plot(const std::filesystem::path& csv_path,
                     const std::filesystem::path& svg_path,
                     const std::string& column = "auto") {
  const auto rows = read_csv(csv_path);
  // per (method, n): mean over seeds
  std::map<std::string, std::map<int, std::pair<double, int>>> series;
  for (const auto& row : rows) {
    const auto v = plot_value(row, column);
    if (!v || !(row.n >= 1) || !(*v > 0.0)) continue;
    auto& cell = series[row.method][row.n];
    cell.first += *v;
    cell.second += 1;
  }
  if (series.empty()) {
    throw std::invalid_argument("plot: no positive values for column '" + column + "' in " +
                                csv_path.string());
  }

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& [method, pts] : series) {
    for (const auto& [n, cell] : pts) {
      const double x = std::log10(static_cast<double>(n));
      const double y = std::log10(cell.first / cell.second);
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;

  constexpr double kW = 760, kH = 520;
  constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  auto sx = [&](double lx) { return kLeft + (lx - x_lo) / (x_hi - x_lo) * plot_w; };
  auto sy = [&](double ly) { return kTop + (y_hi - ly) / (y_hi - y_lo) * plot_h; };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  svg << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">"
      << csv_path.filename().string() << " (" << column << ", log-log)</text>\n";

  // decade grid lines and tick labels
  for (int e = static_cast<int>(std::ceil(x_lo - 1e-9)); e <= std::floor(x_hi + 1e-9); ++e) {
    const double x = sx(e);
    svg << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\""
        << kTop + plot_h << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << kTop + plot_h + 20
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">1e" << e
        << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(y_lo - 1e-9)); e <= std::floor(y_hi + 1e-9); ++e) {
    const double y = sy(e);
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kLeft + plot_w
        << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">1e" << e
        << "</text>\n";
  }
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"#444444\"/>\n";
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 14
      << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">number of "
         "samples n</text>\n";

  int color = 0;
  double legend_y = kTop + 14;
  for (const auto& [method, pts] : series) {
    const char* stroke = kPalette[color % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.8\" points=\"";
    for (const auto& [n, cell] : pts) {
      svg << sx(std::log10(static_cast<double>(n))) << ","
          << sy(std::log10(cell.first / cell.second)) << " ";
    }
    svg << "\"/>\n";
    const double lx = kLeft + plot_w + 14;
    svg << "<line x1=\"" << lx << "\" y1=\"" << legend_y - 4 << "\" x2=\"" << lx + 24
        << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << stroke << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << lx + 30 << "\" y=\"" << legend_y
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << method << "</text>\n";
    legend_y += 18;
    ++color;
  }
  svg << "</svg>\n";

  std::ofstream out(svg_path);
  if (!out) throw std::invalid_argument("cannot write SVG: " + svg_path.string());
  out << svg.str();
}

}  // namespace kquad
