#pragma once

#include <string>
#include <vector>

#include "spn/uq.hpp"

namespace spn {

struct PredictionRow {
  int64_t record = 0;
  int64_t sample = 0;
  int run = 0;
  int param = 0;  // coefficient index 0..12
  double truth = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

void write_predictions_csv(const std::vector<PredictionRow>& rows,
                           const std::string& path);
std::vector<PredictionRow> read_predictions_csv(const std::string& path);

// Per-parameter calibration curves and true-vs-predicted scatter plots
// (with one-sigma error bars), plus a distribution summary panel; reads
// metrics.csv, calibration.csv and predictions.csv from evaluate_dir.
void write_report_svgs(const std::string& evaluate_dir,
                       const std::string& report_dir);

}  // namespace spn
