// Metrics, cross-replication aggregation and plot-ready exports.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "spiderem/data.hpp"
#include "spiderem/model.hpp"

namespace spiderem {

/// Squared mean-field norm ||h(s)||^2: one full diagnostic pass, never
/// charged to a CE budget.
template <LatentModel M>
double h_norm_sq(const M& model, const StatVector& s) {
  return mean_field(model, s, nullptr).squaredNorm();
}

/// Order statistic with linear interpolation between closest ranks
/// (Hyndman-Fan type 7). Input need not be sorted; p in [0, 1].
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile order must lie in [0,1]");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("quantile requires finite values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - std::floor(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

// Per-strategy, per-epoch aggregate across replications. Non-finite
// replications are excluded from the statistics and counted instead.
struct StrategySeries {
  std::string name;
  std::vector<double> q50_h2;
  std::vector<double> mean_neg_f;
  std::vector<double> mean_cum_ce;
  std::vector<long> n_diverged;
};

struct BenchResult {
  long epochs = 0;
  long replications = 0;
  std::vector<StrategySeries> series;
};

namespace detail {

inline void write_line(std::ofstream& out, const std::string& line) { out << line << '\n'; }

inline std::string csv_value(double v) { return fmt_double(v); }

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Static line chart, no scripting. Log-scale ordinate skips nonpositive
// points.
inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            bool log_y, const std::vector<SvgSeries>& series) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const double width = 860, height = 540;
  const double left = 80, right = 30, top = 50, bottom = 60;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (log_y && s.y[i] <= 0.0) continue;
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      const double yy = log_y ? std::log10(s.y[i]) : s.y[i];
      y_min = std::min(y_min, yy);
      y_max = std::max(y_max, yy);
    }
  if (!(x_min <= x_max)) { x_min = 0; x_max = 1; }
  if (!(y_min <= y_max)) { y_min = 0; y_max = 1; }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  const auto sx = [&](double x) {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  };
  const auto sy = [&](double y) {
    const double yy = log_y ? std::log10(y) : y;
    return height - bottom - (yy - y_min) / (y_max - y_min) * (height - top - bottom);
  };
  char buf[256];
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "viewBox=\"0 0 %g %g\" font-family=\"sans-serif\" font-size=\"13\">",
                width, height, width, height);
  write_line(out, buf);
  write_line(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">%s</text>",
                width / 2, title.c_str());
  write_line(out, buf);
  // axes
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>",
                left, height - bottom, width - right, height - bottom);
  write_line(out, buf);
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>",
                left, top, left, height - bottom);
  write_line(out, buf);
  // ticks
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = x_min + (x_max - x_min) * i / ticks;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#999\"/>"
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.4g</text>",
                  sx(fx), height - bottom, sx(fx), height - bottom + 5, sx(fx),
                  height - bottom + 20, fx);
    write_line(out, buf);
    const double fy = y_min + (y_max - y_min) * i / ticks;
    const double raw = log_y ? std::pow(10.0, fy) : fy;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#999\"/>"
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>",
                  left - 5, sy(raw), left, sy(raw), left - 8, sy(raw) + 4, raw);
    write_line(out, buf);
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%s</text>",
                (left + width - right) / 2, height - 15, x_label.c_str());
  write_line(out, buf);
  std::snprintf(buf, sizeof(buf),
                "<text x=\"18\" y=\"%g\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 18 %g)\">%s</text>",
                (top + height - bottom) / 2, (top + height - bottom) / 2, y_label.c_str());
  write_line(out, buf);
  // polylines and legend
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      const double xv = series[s].x[i], yv = series[s].y[i];
      if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
      if (log_y && yv <= 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(xv), sy(yv));
      points += buf;
    }
    if (!points.empty()) {
      write_line(out, "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                          "\" stroke-width=\"1.6\" points=\"" + points + "\"/>");
    }
    const double ly = top + 16.0 * static_cast<double>(s);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" "
                  "stroke-width=\"2\"/><text x=\"%g\" y=\"%g\">%s</text>",
                  width - right - 170, ly, width - right - 140, ly, color,
                  width - right - 132, ly + 4, series[s].name.c_str());
    write_line(out, buf);
  }
  write_line(out, "</svg>");
}

}  // namespace detail

// Writes the aggregate table (bench.csv, the authoritative schema) plus one
// CSV series and one SVG per figure:
//   fig1  median ||h||^2 vs epoch          (log ordinate)
//   fig2  median ||h||^2 vs cumulative CE  (log ordinate)
//   fig3  mean -F vs cumulative CE
inline void export_bench(const BenchResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto path = [&](const std::string& name) {
    return (fs::path(out_dir) / name).string();
  };

  {
    std::ofstream out(path("bench.csv"));
    if (!out) throw std::runtime_error("cannot write bench.csv");
    out << "strategy,epoch,cum_ce,q50_h2,mean_negF,n_diverged\n";
    for (const auto& s : result.series)
      for (long e = 0; e < result.epochs; ++e)
        out << s.name << ',' << (e + 1) << ',' << detail::csv_value(s.mean_cum_ce[e])
            << ',' << detail::csv_value(s.q50_h2[e]) << ','
            << detail::csv_value(s.mean_neg_f[e]) << ',' << s.n_diverged[e] << '\n';
  }
  {
    std::ofstream out(path("fig1_h2_vs_epoch.csv"));
    out << "strategy,epoch,q50_h2\n";
    for (const auto& s : result.series)
      for (long e = 0; e < result.epochs; ++e)
        out << s.name << ',' << (e + 1) << ',' << detail::csv_value(s.q50_h2[e]) << '\n';
  }
  {
    std::ofstream out(path("fig2_h2_vs_ce.csv"));
    out << "strategy,cum_ce,q50_h2\n";
    for (const auto& s : result.series)
      for (long e = 0; e < result.epochs; ++e)
        out << s.name << ',' << detail::csv_value(s.mean_cum_ce[e]) << ','
            << detail::csv_value(s.q50_h2[e]) << '\n';
  }
  {
    std::ofstream out(path("fig3_negF_vs_ce.csv"));
    out << "strategy,cum_ce,mean_negF\n";
    for (const auto& s : result.series)
      for (long e = 0; e < result.epochs; ++e)
        out << s.name << ',' << detail::csv_value(s.mean_cum_ce[e]) << ','
            << detail::csv_value(s.mean_neg_f[e]) << '\n';
  }

  std::vector<detail::SvgSeries> fig1, fig2, fig3;
  for (const auto& s : result.series) {
    detail::SvgSeries a{s.name, {}, s.q50_h2};
    for (long e = 0; e < result.epochs; ++e) a.x.push_back(static_cast<double>(e + 1));
    fig1.push_back(a);
    fig2.push_back({s.name, s.mean_cum_ce, s.q50_h2});
    fig3.push_back({s.name, s.mean_cum_ce, s.mean_neg_f});
  }
  detail::write_svg_chart(path("fig1_h2_vs_epoch.svg"),
                          "median squared mean-field norm per epoch", "epoch",
                          "q50 ||h||^2", true, fig1);
  detail::write_svg_chart(path("fig2_h2_vs_ce.svg"),
                          "median squared mean-field norm vs conditional expectations",
                          "cumulative CE", "q50 ||h||^2", true, fig2);
  detail::write_svg_chart(path("fig3_negF_vs_ce.svg"),
                          "mean negated objective vs conditional expectations",
                          "cumulative CE", "mean -F", false, fig3);
}

}  // namespace spiderem
