#pragma once

#include <array>
#include <string>
#include <vector>

#include "spn/nn.hpp"

namespace spn {

struct UQConfig {
  int passes = 50;          // stochastic forward passes per input
  double tau_inv = 0.0;     // model-precision variance offset
  bool use_dropout = true;  // false degenerates to identical passes
  std::vector<double> levels = {0.5, 0.68, 0.9, 0.95};

  void validate() const {
    if (passes < 1) throw ValidationError("uq passes must be >= 1");
    if (tau_inv < 0.0) throw ValidationError("tau_inv must be >= 0");
    for (double q : levels)
      if (q <= 0.0 || q >= 1.0)
        throw ValidationError("calibration levels must lie in (0,1)");
  }
};

// Predictive mean/std per coefficient from M stochastic passes, plus the
// raw pass outputs (M x 13, row-major).
struct PosteriorSummary {
  std::array<double, kNumCoefficients> mean{};
  std::array<double, kNumCoefficients> stddev{};
  std::vector<double> samples;
  int passes = 0;
};

// x is one normalized trajectory, horizon x d_in row-major. Mean is the
// arithmetic pass mean; variance is tau_inv + E[y^2] - mean^2 floored at
// zero before the square root. Deterministic given the seed.
PosteriorSummary mc_dropout_predict(const Checkpoint& checkpoint,
                                    const std::vector<float>& x,
                                    const UQConfig& config, uint64_t seed);

struct ParamMetrics {
  double bias = 0.0;      // |mean prediction - mean truth|
  double rmse = 0.0;
  double avg_std = 0.0;
  double coverage = 0.0;  // fraction with |error| <= per-sample std
  double ratio = 0.0;     // rmse / avg_std, +inf when avg_std is 0
  int rank = 0;           // 1..13, ascending ratio, ties by index
};

struct MetricsReport {
  std::array<ParamMetrics, kNumCoefficients> params;
  double overall_rmse = 0.0;  // unweighted mean of the 13 RMSEs
};

MetricsReport compute_metrics(
    const std::vector<PosteriorSummary>& summaries,
    const std::vector<std::array<double, kNumCoefficients>>& truths);

// Fills ratio and rank on an existing report.
void rank_parameters(MetricsReport& report);

struct CalibrationPoint {
  double nominal = 0.0;
  double empirical = 0.0;
};

// Per parameter, empirical coverage of the Gaussian central interval
// mean +- z(level) * std at each nominal level.
std::vector<std::vector<CalibrationPoint>> calibration_curve(
    const std::vector<PosteriorSummary>& summaries,
    const std::vector<std::array<double, kNumCoefficients>>& truths,
    const std::vector<double>& levels);

// Inverse standard normal CDF (Acklam rational approximation polished
// with one Halley step; |error| < 1e-12 on (0,1)).
double inverse_normal_cdf(double p);

// Display transform into raw coefficient units: multiplies mean/std by
// each family gain.
PosteriorSummary denormalize_summary(
    const PosteriorSummary& summary,
    const std::array<double, kNumCoefficients>& gains);

void write_metrics_csv(const MetricsReport& report, const std::string& path);
MetricsReport read_metrics_csv(const std::string& path);
void write_calibration_csv(
    const std::vector<std::vector<CalibrationPoint>>& curves,
    const std::vector<double>& levels, const std::string& path);

}  // namespace spn
