#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spn/dataset.hpp"

namespace spn {

// Flat row-major tensor, up to 3 axes. float for training, double for
// gradient verification.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), T(0));
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  int64_t size() const { return static_cast<int64_t>(data.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
};

struct ResNetConfig {
  int filters = 128;
  int kernel = 5;
  int blocks = 3;
  double dropout = 0.2;
  int d_in = 14;
  int d_out = 13;
  int horizon = 365;

  void validate() const;
  int64_t param_count() const;
};

template <typename T>
struct ConvParams {
  Tensor<T> w;  // [c_out, c_in, k]
  Tensor<T> b;  // [c_out]
};

template <typename T>
struct ModelParams {
  ConvParams<T> proj;                // 1x1, d_in -> F
  std::vector<ConvParams<T>> block;  // F -> F, kernel k
  Tensor<T> fc_w;                    // [F, d_out]
  Tensor<T> fc_b;                    // [d_out]

  static ModelParams zeros(const ResNetConfig& config);
  // He-style scaled uniform weights, zero biases
  static ModelParams init(const ResNetConfig& config, RandomStream& rng);
};

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> parameter_list(
    ModelParams<T>& params);

enum class RunMode { Train, Infer, McDropout };

// Inverted dropout: zero with probability p, otherwise scale by 1/(1-p),
// so the mask expectation is the identity and plain inference needs no
// rescaling. mask records kept positions for the backward pass.
template <typename T>
void inverted_dropout(Tensor<T>& t, double p, RandomStream& rng,
                      std::vector<uint8_t>& mask);

// Same-padding stride-1 1D cross-correlation. x [batch, c_in, len],
// w [c_out, c_in, k], y [batch, c_out, len].
template <typename T>
void conv1d_forward(const T* x, int batch, int c_in, int len, const T* w,
                    const T* b, int c_out, int k, T* y);

// Gradient transform: upstream dy -> dx (optional), dw, db.
template <typename T>
void conv1d_backward(const T* x, int batch, int c_in, int len, const T* w,
                     int c_out, int k, const T* dy, T* dx, T* dw, T* db);

template <typename T>
struct ForwardCache {
  Tensor<T> x_perm;                  // [batch, d_in, len]
  Tensor<T> x0;                      // after projection + ReLU
  std::vector<Tensor<T>> block_act;  // ReLU(conv) per block, pre-dropout
  std::vector<Tensor<T>> x_chain;    // x^1..x^B
  std::vector<std::vector<uint8_t>> block_mask;
  Tensor<T> gap;      // [batch, F]
  Tensor<T> gap_act;  // ReLU(gap)
  std::vector<uint8_t> fc_mask;
  Tensor<T> z;      // after head dropout
  Tensor<T> y_hat;  // [batch, d_out]
};

// x is [batch, horizon, d_in]; returns y_hat in (0,1)^[batch, d_out].
// Dropout is active in Train and McDropout modes (inverted scaling).
// rng may be null when no dropout will be drawn.
template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const ResNetConfig& config,
                  const Tensor<T>& x, RunMode mode,
                  RandomStream* rng = nullptr,
                  ForwardCache<T>* cache = nullptr);

// Backward through the whole network given d(loss)/d(y_hat); returns
// gradients shaped like the parameters.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params,
                        const ResNetConfig& config,
                        const ForwardCache<T>& cache, const Tensor<T>& dy);

// Mean over batch and outputs of (y_hat - y)^2, plus its gradient.
template <typename T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& y_hat,
                                      const Tensor<T>& y);

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-4;

  static AdamState init(ModelParams<T>& params, double lr);
};

template <typename T>
void adam_step(ModelParams<T>& params, ModelParams<T>& grads,
               AdamState<T>& state);

struct TrainConfig {
  int batch_size = 8;
  int max_epochs = 50;
  int patience = 10;
  double noise_sigma = 0.05;
  double lr = 1e-4;
  uint64_t seed = 42;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double best_val = 0.0;  // best validation loss so far
};

// Inference-time metadata carried with the weights so a checkpoint is
// self-contained: how to normalize trajectories and how to denormalize
// predicted coefficients.
struct CheckpointMeta {
  std::vector<std::string> feature_order;
  double human_total = 4040.0;
  double mosquito_total = 2010.0;
  std::vector<int> human_columns, mosquito_columns;
  std::array<double, kNumCoefficients> target_gains{};
  uint64_t train_seed = 0;
  std::string dataset_config_hash;
};

struct Checkpoint {
  ResNetConfig config;
  CheckpointMeta meta;
  ModelParams<float> params;
  double best_val_loss = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
};

// Shuffled minibatch Adam on MSE with per-batch Gaussian input noise;
// validation with dropout off and no noise; keeps the best-validation
// parameters; early-stops after `patience` epochs without improvement.
TrainResult train(const Dataset& dataset, const ResNetConfig& net_config,
                  const TrainConfig& train_config);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  bool pass = false;
};

// Full-network finite-difference verification in double precision;
// requires dropout 0.
GradCheckReport gradient_check(const ResNetConfig& config, double tolerance,
                               uint64_t seed = 1234);

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path);

}  // namespace spn
