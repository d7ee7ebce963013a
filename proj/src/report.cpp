#include "spn/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "spn/svg.hpp"

namespace spn {

namespace fs = std::filesystem;

void write_predictions_csv(const std::vector<PredictionRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions '" + path + "'");
  out << "record,sample,run,parameter,truth,mean,std\n";
  for (const auto& r : rows)
    out << r.record << ',' << r.sample << ',' << r.run << ','
        << kCoefficientNames[r.param] << ',' << format_double(r.truth) << ','
        << format_double(r.mean) << ',' << format_double(r.stddev) << '\n';
}

std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "record,sample,run,parameter,truth,mean,std")
    throw IoError("unexpected predictions header");
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 7) throw IoError("bad predictions row");
    PredictionRow r;
    r.record = std::stoll(cells[0]);
    r.sample = std::stoll(cells[1]);
    r.run = std::stoi(cells[2]);
    r.param = -1;
    for (int i = 0; i < kNumCoefficients; ++i)
      if (cells[3] == kCoefficientNames[i]) r.param = i;
    if (r.param < 0) throw IoError("unknown parameter '" + cells[3] + "'");
    r.truth = std::stod(cells[4]);
    r.mean = std::stod(cells[5]);
    r.stddev = std::stod(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

constexpr int kPlotSize = 360;
constexpr int kMargin = 46;

// maps a unit-square point into the plot area (y axis flipped)
double px(double v) { return kMargin + v * (kPlotSize - 2 * kMargin); }
double py(double v) { return kPlotSize - kMargin - v * (kPlotSize - 2 * kMargin); }

void draw_frame(SvgBuilder& svg, const std::string& title,
                const std::string& x_label, const std::string& y_label) {
  svg.rect(0, 0, kPlotSize, kPlotSize, "white");
  svg.line(px(0), py(0), px(1), py(0), "black", 1.0);
  svg.line(px(0), py(0), px(0), py(1), "black", 1.0);
  for (double tick = 0.0; tick <= 1.001; tick += 0.25) {
    svg.line(px(tick), py(0), px(tick), py(0) + 4, "black", 1.0);
    svg.text(px(tick), py(0) + 16, format_double(tick), 9, "middle");
    svg.line(px(0) - 4, py(tick), px(0), py(tick), "black", 1.0);
    svg.text(px(0) - 6, py(tick) + 3, format_double(tick), 9, "end");
  }
  svg.text(kPlotSize / 2.0, 16, title, 12, "middle");
  svg.text(kPlotSize / 2.0, kPlotSize - 8, x_label, 10, "middle");
  svg.text(12, kPlotSize / 2.0, y_label, 10, "middle");
  // diagonal reference
  svg.line(px(0), py(0), px(1), py(1), "gray", 1.0, "4,4");
}

void calibration_svg(const std::vector<CalibrationPoint>& points,
                     const std::string& name, const std::string& path) {
  SvgBuilder svg(kPlotSize, kPlotSize);
  draw_frame(svg, "Calibration: " + name, "nominal coverage",
             "empirical coverage");
  std::vector<std::pair<double, double>> line;
  for (const auto& pt : points)
    line.emplace_back(px(pt.nominal), py(pt.empirical));
  svg.polyline(line, "#1f77b4", 1.5);
  for (const auto& pt : points)
    svg.circle(px(pt.nominal), py(pt.empirical), 3.0, "#1f77b4");
  svg.save(path);
}

void scatter_svg(const std::vector<PredictionRow>& rows,
                 const std::string& name, const std::string& path) {
  SvgBuilder svg(kPlotSize, kPlotSize);
  draw_frame(svg, "True vs predicted: " + name, "true value",
             "predicted mean");
  auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  for (const auto& r : rows) {
    double lo = clamp01(r.mean - r.stddev), hi = clamp01(r.mean + r.stddev);
    svg.line(px(r.truth), py(lo), px(r.truth), py(hi), "#9ecae1", 1.0);
  }
  for (const auto& r : rows)
    svg.circle(px(r.truth), py(clamp01(r.mean)), 2.5, "#1f77b4");
  svg.save(path);
}

void distributions_svg(
    const std::map<int, std::vector<PredictionRow>>& by_param,
    const std::string& path) {
  const int cols = 4, rows = 4, cell = 220;
  SvgBuilder svg(cols * cell, rows * cell);
  svg.rect(0, 0, cols * cell, rows * cell, "white");
  const int bins = 12;

  for (int p = 0; p < kNumCoefficients; ++p) {
    const double ox = (p % cols) * cell, oy = (p / cols) * cell;
    const double m = 30;
    auto lx = [&](double v) { return ox + m + v * (cell - 2 * m); };
    auto ly = [&](double v) { return oy + cell - m - v * (cell - 2 * m); };

    std::vector<double> truth_hist(bins, 0.0), mean_hist(bins, 0.0);
    auto it = by_param.find(p);
    double total = it == by_param.end() ? 0.0
                                        : static_cast<double>(it->second.size());
    if (total > 0) {
      for (const auto& r : it->second) {
        int bt = std::min(bins - 1, static_cast<int>(r.truth * bins));
        int bm = std::min(bins - 1,
                          std::max(0, static_cast<int>(r.mean * bins)));
        truth_hist[bt] += 1.0;
        mean_hist[bm] += 1.0;
      }
    }
    double peak = 1.0;
    for (int b = 0; b < bins; ++b)
      peak = std::max({peak, truth_hist[b], mean_hist[b]});

    svg.line(lx(0), ly(0), lx(1), ly(0), "black", 1.0);
    svg.text(ox + cell / 2.0, oy + 16, kCoefficientNames[p], 11, "middle");
    auto step_curve = [&](const std::vector<double>& hist,
                          const std::string& color,
                          const std::string& dash) {
      std::vector<std::pair<double, double>> pts;
      for (int b = 0; b < bins; ++b) {
        double h = hist[b] / peak;
        pts.emplace_back(lx(b / static_cast<double>(bins)), ly(h));
        pts.emplace_back(lx((b + 1) / static_cast<double>(bins)), ly(h));
      }
      svg.polyline(pts, color, 1.4, dash);
    };
    step_curve(truth_hist, "#2ca02c", "");
    step_curve(mean_hist, "#1f77b4", "5,3");
  }
  // legend in the spare cell
  double ox = 3 * cell + 20, oy = 3 * cell + 40;
  svg.line(ox, oy, ox + 30, oy, "#2ca02c", 1.4);
  svg.text(ox + 36, oy + 4, "true values", 11);
  svg.line(ox, oy + 20, ox + 30, oy + 20, "#1f77b4", 1.4, "5,3");
  svg.text(ox + 36, oy + 24, "predicted means", 11);
  svg.save(path);
}

}  // namespace

void write_report_svgs(const std::string& evaluate_dir,
                       const std::string& report_dir) {
  fs::path eval(evaluate_dir);
  if (!fs::exists(eval / "metrics.csv") ||
      !fs::exists(eval / "calibration.csv") ||
      !fs::exists(eval / "predictions.csv"))
    throw IoError("evaluation outputs missing in " + evaluate_dir);

  (void)read_metrics_csv((eval / "metrics.csv").string());  // validates

  // calibration.csv -> per-parameter points
  std::map<int, std::vector<CalibrationPoint>> curves;
  {
    std::ifstream in(eval / "calibration.csv");
    std::string line;
    std::getline(in, line);
    if (line != "parameter,nominal,empirical")
      throw IoError("unexpected calibration header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != 3) throw IoError("bad calibration row");
      int idx = -1;
      for (int i = 0; i < kNumCoefficients; ++i)
        if (cells[0] == kCoefficientNames[i]) idx = i;
      if (idx < 0) throw IoError("unknown parameter '" + cells[0] + "'");
      curves[idx].push_back({std::stod(cells[1]), std::stod(cells[2])});
    }
  }

  auto rows = read_predictions_csv((eval / "predictions.csv").string());
  std::map<int, std::vector<PredictionRow>> by_param;
  for (const auto& r : rows) by_param[r.param].push_back(r);

  fs::create_directories(report_dir);
  for (int i = 0; i < kNumCoefficients; ++i) {
    calibration_svg(curves[i], kCoefficientNames[i],
                    (fs::path(report_dir) /
                     ("calibration_" + std::string(kCoefficientNames[i]) +
                      ".svg"))
                        .string());
    scatter_svg(by_param[i], kCoefficientNames[i],
                (fs::path(report_dir) /
                 ("scatter_" + std::string(kCoefficientNames[i]) + ".svg"))
                    .string());
  }
  distributions_svg(by_param,
                    (fs::path(report_dir) / "distributions.svg").string());
}

}  // namespace spn
