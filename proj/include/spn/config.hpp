#pragma once

#include <string>

#include "spn/dataset.hpp"
#include "spn/nn.hpp"
#include "spn/uq.hpp"

namespace spn {

struct PathsConfig {
  std::string weather_csv;  // empty when covariates.synthetic
  std::string covariate_dir = "out/covariates";
  std::string dataset_dir = "out/dataset";
  std::string checkpoint = "out/train/checkpoint.bin";
  std::string evaluate_dir = "out/evaluate";
  std::string report_dir = "out/report";
};

struct CovariateSourceConfig {
  bool synthetic = true;
  int horizon = 365;
  int patches = 2;
};

struct DatasetGenConfig {
  int64_t n = 256;
  int runs_per_sample = 1;
  DropoutSpec dropout;
  std::vector<double> split_fractions = {0.8, 0.1, 0.1};
};

// One config file drives the whole pipeline; every field has a default
// so a minimal file (even {}) is runnable.
struct RunConfig {
  uint64_t master_seed = 42;
  int workers = 1;
  PathsConfig paths;
  CovariateSourceConfig covariates;
  ModelConfig model;
  DatasetGenConfig dataset;
  ResNetConfig network;       // d_in/horizon are taken from the dataset
  TrainConfig train;
  UQConfig uq;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);

// Canonical resolved form (all defaults filled in, keys sorted); this is
// what gets copied into output directories.
std::string resolved_config_json(const RunConfig& config);

// The generation-relevant subset (seed, covariates, model, dataset) that
// identifies a dataset; execution knobs like worker count stay out so
// parallel schedules produce byte-identical datasets.
std::string dataset_identity_json(const RunConfig& config);

void write_resolved_config(const RunConfig& config, const std::string& dir);

}  // namespace spn
