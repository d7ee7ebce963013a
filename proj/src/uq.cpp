#include "spn/uq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace spn {

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ValidationError("inverse_normal_cdf needs p in (0,1)");

  // Acklam's rational approximation
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;

  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
          c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // one Halley step against erfc for near machine precision
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u =
      e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

PosteriorSummary mc_dropout_predict(const Checkpoint& checkpoint,
                                    const std::vector<float>& x,
                                    const UQConfig& config, uint64_t seed) {
  config.validate();
  const auto& cfg = checkpoint.config;
  if (static_cast<int64_t>(x.size()) !=
      static_cast<int64_t>(cfg.horizon) * cfg.d_in)
    throw StructuralError("trajectory shape does not match checkpoint");
  if (cfg.d_out != kNumCoefficients)
    throw StructuralError("checkpoint output width is not 13");

  Tensor<float> input({1, cfg.horizon, cfg.d_in});
  std::copy(x.begin(), x.end(), input.data.begin());

  PosteriorSummary out;
  out.passes = config.passes;
  out.samples.resize(static_cast<size_t>(config.passes) * kNumCoefficients);

  for (int m = 0; m < config.passes; ++m) {
    RandomStream rng(derive_seed(seed, static_cast<uint64_t>(m), 0xAC));
    auto y = forward(checkpoint.params, cfg, input,
                     config.use_dropout ? RunMode::McDropout : RunMode::Infer,
                     &rng);
    for (int i = 0; i < kNumCoefficients; ++i)
      out.samples[static_cast<size_t>(m) * kNumCoefficients + i] =
          static_cast<double>(y.data[i]);
  }

  for (int i = 0; i < kNumCoefficients; ++i) {
    double mean = 0.0, sq = 0.0;
    for (int m = 0; m < config.passes; ++m) {
      double v = out.samples[static_cast<size_t>(m) * kNumCoefficients + i];
      mean += v;
      sq += v * v;
    }
    mean /= config.passes;
    sq /= config.passes;
    double var = config.tau_inv + sq - mean * mean;
    out.mean[i] = mean;
    out.stddev[i] = std::sqrt(std::max(0.0, var));
  }
  return out;
}

MetricsReport compute_metrics(
    const std::vector<PosteriorSummary>& summaries,
    const std::vector<std::array<double, kNumCoefficients>>& truths) {
  if (summaries.empty())
    throw ValidationError("compute_metrics needs at least one sample");
  if (summaries.size() != truths.size())
    throw ValidationError("summaries and truths have different lengths");

  const double n = static_cast<double>(summaries.size());
  MetricsReport report;
  double rmse_sum = 0.0;
  for (int i = 0; i < kNumCoefficients; ++i) {
    double pred_bar = 0.0, truth_bar = 0.0, sq_err = 0.0, std_sum = 0.0;
    double covered = 0.0;
    for (size_t j = 0; j < summaries.size(); ++j) {
      double err = summaries[j].mean[i] - truths[j][i];
      pred_bar += summaries[j].mean[i];
      truth_bar += truths[j][i];
      sq_err += err * err;
      std_sum += summaries[j].stddev[i];
      if (std::abs(err) <= summaries[j].stddev[i]) covered += 1.0;
    }
    auto& pm = report.params[i];
    pm.bias = std::abs(pred_bar / n - truth_bar / n);
    pm.rmse = std::sqrt(sq_err / n);
    pm.avg_std = std_sum / n;
    pm.coverage = covered / n;
    rmse_sum += pm.rmse;
  }
  report.overall_rmse = rmse_sum / kNumCoefficients;
  rank_parameters(report);
  return report;
}

void rank_parameters(MetricsReport& report) {
  for (auto& pm : report.params)
    pm.ratio = pm.avg_std > 0.0 ? pm.rmse / pm.avg_std
                                : std::numeric_limits<double>::infinity();
  std::array<int, kNumCoefficients> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    return report.params[lhs].ratio < report.params[rhs].ratio;
  });
  for (int pos = 0; pos < kNumCoefficients; ++pos)
    report.params[order[pos]].rank = pos + 1;
}

std::vector<std::vector<CalibrationPoint>> calibration_curve(
    const std::vector<PosteriorSummary>& summaries,
    const std::vector<std::array<double, kNumCoefficients>>& truths,
    const std::vector<double>& levels) {
  if (summaries.size() != truths.size())
    throw ValidationError("summaries and truths have different lengths");
  std::vector<std::vector<CalibrationPoint>> curves(kNumCoefficients);
  const double n = static_cast<double>(summaries.size());
  for (double q : levels) {
    double z = inverse_normal_cdf(0.5 * (1.0 + q));
    for (int i = 0; i < kNumCoefficients; ++i) {
      double covered = 0.0;
      for (size_t j = 0; j < summaries.size(); ++j)
        if (std::abs(summaries[j].mean[i] - truths[j][i]) <=
            z * summaries[j].stddev[i])
          covered += 1.0;
      curves[i].push_back({q, n > 0 ? covered / n : 0.0});
    }
  }
  return curves;
}

PosteriorSummary denormalize_summary(
    const PosteriorSummary& summary,
    const std::array<double, kNumCoefficients>& gains) {
  PosteriorSummary out = summary;
  for (int i = 0; i < kNumCoefficients; ++i) {
    out.mean[i] *= gains[i];
    out.stddev[i] *= gains[i];
  }
  for (int m = 0; m < out.passes; ++m)
    for (int i = 0; i < kNumCoefficients; ++i)
      out.samples[static_cast<size_t>(m) * kNumCoefficients + i] *= gains[i];
  return out;
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics '" + path + "'");
  out << "parameter,bias,rmse,avg_std,coverage_1sigma,ratio,rank\n";
  for (int i = 0; i < kNumCoefficients; ++i) {
    const auto& pm = report.params[i];
    out << kCoefficientNames[i] << ',' << format_double(pm.bias) << ','
        << format_double(pm.rmse) << ',' << format_double(pm.avg_std) << ','
        << format_double(pm.coverage) << ','
        << (std::isinf(pm.ratio) ? "inf" : format_double(pm.ratio)) << ','
        << pm.rank << '\n';
  }
  out << "overall,," << format_double(report.overall_rmse) << ",,,,\n";
}

MetricsReport read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "parameter,bias,rmse,avg_std,coverage_1sigma,ratio,rank")
    throw IoError("unexpected metrics header");

  MetricsReport report;
  bool saw_overall = false;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 7) throw IoError("bad metrics row");
    if (cells[0] == "overall") {
      report.overall_rmse = std::stod(cells[2]);
      saw_overall = true;
      continue;
    }
    int idx = -1;
    for (int i = 0; i < kNumCoefficients; ++i)
      if (cells[0] == kCoefficientNames[i]) idx = i;
    if (idx < 0) throw IoError("unknown parameter '" + cells[0] + "'");
    auto& pm = report.params[idx];
    pm.bias = std::stod(cells[1]);
    pm.rmse = std::stod(cells[2]);
    pm.avg_std = std::stod(cells[3]);
    pm.coverage = std::stod(cells[4]);
    pm.ratio = cells[5] == "inf" ? std::numeric_limits<double>::infinity()
                                 : std::stod(cells[5]);
    pm.rank = std::stoi(cells[6]);
    ++rows;
  }
  if (rows != kNumCoefficients || !saw_overall)
    throw IoError("metrics file is incomplete");
  return report;
}

void write_calibration_csv(
    const std::vector<std::vector<CalibrationPoint>>& curves,
    const std::vector<double>& levels, const std::string& path) {
  (void)levels;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration '" + path + "'");
  out << "parameter,nominal,empirical\n";
  for (int i = 0; i < kNumCoefficients; ++i)
    for (const auto& pt : curves[i])
      out << kCoefficientNames[i] << ',' << format_double(pt.nominal) << ','
          << format_double(pt.empirical) << '\n';
}

}  // namespace spn
