#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spn/model.hpp"

namespace spn {

// Thrown when more than 1% of requested samples fail to simulate.
struct GenerationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DropoutSpec {
  enum class Mode { EventDrop, CellMask };
  double p = 0.2;
  Mode mode = Mode::EventDrop;
};

// One (trajectory, coefficients) pair. x is the normalized T x d_in
// matrix, row-major, float32.
struct SampleRecord {
  int64_t sample_id = 0;
  int run = 0;
  uint64_t seed = 0;
  std::array<double, kNumCoefficients> theta_raw{};
  std::array<double, kNumCoefficients> theta_norm{};
  std::vector<float> x;
};

struct DatasetManifest {
  int64_t n = 0;  // requested samples; records = included ids x runs
  int runs_per_sample = 1;
  int horizon = 365;
  int d_in = 14;
  std::vector<std::string> feature_order;
  double human_total = 4040.0;
  double mosquito_total = 2010.0;
  std::vector<int> human_columns, mosquito_columns;
  std::array<double, kNumCoefficients> target_gains{};
  DropoutSpec dropout;
  uint64_t master_seed = 0;
  std::string config_hash;         // over the resolved generation config
  std::string config_json;         // resolved generation config, canonical
  std::vector<double> split_fractions = {0.8, 0.1, 0.1};
  uint64_t split_seed = 0;
  std::vector<int> split;          // per included sample: 0 train 1 val 2 test
  std::vector<int64_t> sample_ids; // included sample ids, ascending

  int64_t record_count() const {
    return static_cast<int64_t>(sample_ids.size()) * runs_per_sample;
  }
  int64_t record_floats() const {
    return kNumCoefficients + static_cast<int64_t>(horizon) * d_in;
  }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SampleRecord> records;  // ordered by (sample, run)

  // record indices of one split (0 train, 1 val, 2 test)
  std::vector<int64_t> split_records(int which) const;
};

// Derived deterministically from (master seed, sample id, run); document
// once, never store per-sample seeds.
uint64_t sample_seed(uint64_t master_seed, int64_t sample_id, int run);

// theta_norm[k] = theta_raw[k] / family gain; errors if a raw value falls
// outside [0, gain].
std::array<double, kNumCoefficients> normalize_targets(
    const CoefficientVector& theta, const CoefficientBounds& bounds);
CoefficientVector denormalize_targets(
    const std::array<double, kNumCoefficients>& theta_norm,
    const CoefficientBounds& bounds);

// Human places / patch human total, mosquito places / patch mosquito
// total. Not clamped; denormalize is the exact inverse.
std::vector<float> normalize_features(const Trajectory& traj,
                                      const DatasetManifest& manifest);
std::vector<double> denormalize_features(const std::vector<float>& x,
                                         const DatasetManifest& manifest);

// Event-drop deletes each logged event independently with probability p
// and rebuilds daily snapshots from the survivors (floored at zero).
// Cell-mask carries the previous day's value forward per cell.
Trajectory apply_event_dropout(const PetriNet& net, const Trajectory& traj,
                               const DropoutSpec& spec, RandomStream& rng);

// Seeded shuffle then contiguous assignment; floor-based sizes with the
// remainder going to train. Returns one label per sample in id order.
std::vector<int> split_dataset(int64_t n,
                               const std::vector<double>& fractions,
                               uint64_t seed);

struct GenerateOptions {
  int64_t n = 256;
  int runs_per_sample = 1;
  DropoutSpec dropout;
  uint64_t master_seed = 42;
  std::vector<double> split_fractions = {0.8, 0.1, 0.1};
  int workers = 1;
  std::string config_json;  // resolved config copied into the manifest
};

Dataset generate_dataset(const ModelConfig& model,
                         const std::vector<PatchCovariateSeries>& covariates,
                         const GenerateOptions& options);

// manifest.json + samples.bin (float32 LE records: theta_norm then
// row-major X) + samples_preview.csv with the first three records.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace spn
