#include "spn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>

namespace spn {

using nlohmann::json;

void ResNetConfig::validate() const {
  if (filters < 1 || kernel < 1 || d_out < 1 || d_in < 1 || horizon < 1)
    throw ValidationError("resnet config dimensions must be >= 1");
  if (blocks < 0) throw ValidationError("blocks must be >= 0");
  if (kernel % 2 == 0)
    throw ValidationError("kernel must be odd for same padding");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ValidationError("dropout must lie in [0,1)");
}

int64_t ResNetConfig::param_count() const {
  int64_t n = static_cast<int64_t>(filters) * d_in + filters;  // projection
  n += static_cast<int64_t>(blocks) *
       (static_cast<int64_t>(filters) * filters * kernel + filters);
  n += static_cast<int64_t>(filters) * d_out + d_out;  // head
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ResNetConfig& config) {
  ModelParams<T> p;
  p.proj.w = Tensor<T>({config.filters, config.d_in, 1});
  p.proj.b = Tensor<T>({config.filters});
  for (int i = 0; i < config.blocks; ++i) {
    ConvParams<T> c;
    c.w = Tensor<T>({config.filters, config.filters, config.kernel});
    c.b = Tensor<T>({config.filters});
    p.block.push_back(std::move(c));
  }
  p.fc_w = Tensor<T>({config.filters, config.d_out});
  p.fc_b = Tensor<T>({config.d_out});
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ResNetConfig& config,
                                    RandomStream& rng) {
  config.validate();
  ModelParams<T> p = zeros(config);
  auto fill = [&rng](Tensor<T>& t, int fan_in) {
    double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : t.data)
      v = static_cast<T>(rng.uniform_range(-limit, limit));
  };
  fill(p.proj.w, config.d_in);
  for (auto& blk : p.block) fill(blk.w, config.filters * config.kernel);
  fill(p.fc_w, config.filters);
  return p;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> parameter_list(
    ModelParams<T>& params) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  out.emplace_back("proj.w", &params.proj.w);
  out.emplace_back("proj.b", &params.proj.b);
  for (size_t i = 0; i < params.block.size(); ++i) {
    out.emplace_back("block" + std::to_string(i + 1) + ".w",
                     &params.block[i].w);
    out.emplace_back("block" + std::to_string(i + 1) + ".b",
                     &params.block[i].b);
  }
  out.emplace_back("fc.w", &params.fc_w);
  out.emplace_back("fc.b", &params.fc_b);
  return out;
}

template <typename T>
void conv1d_forward(const T* __restrict__ x, int batch, int c_in, int len,
                    const T* __restrict__ w, const T* __restrict__ b,
                    int c_out, int k, T* __restrict__ y) {
  const int pad = (k - 1) / 2;
  for (int bi = 0; bi < batch; ++bi) {
    const T* xb = x + static_cast<int64_t>(bi) * c_in * len;
    T* yb = y + static_cast<int64_t>(bi) * c_out * len;
    for (int co = 0; co < c_out; ++co) {
      T* yrow = yb + static_cast<int64_t>(co) * len;
      std::fill(yrow, yrow + len, b[co]);
      const T* wrow = w + static_cast<int64_t>(co) * c_in * k;
      for (int ci = 0; ci < c_in; ++ci) {
        const T* xrow = xb + static_cast<int64_t>(ci) * len;
        const T* wk = wrow + static_cast<int64_t>(ci) * k;
        for (int j = 0; j < k; ++j) {
          const int shift = j - pad;
          const T wj = wk[j];
          const int t0 = std::max(0, -shift);
          const int t1 = std::min(len, len - shift);
          const T* xs = xrow + shift;
          for (int t = t0; t < t1; ++t) yrow[t] += wj * xs[t];
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward(const T* __restrict__ x, int batch, int c_in, int len,
                     const T* __restrict__ w, int c_out, int k,
                     const T* __restrict__ dy, T* __restrict__ dx,
                     T* __restrict__ dw, T* __restrict__ db) {
  const int pad = (k - 1) / 2;
  for (int bi = 0; bi < batch; ++bi) {
    const T* xb = x + static_cast<int64_t>(bi) * c_in * len;
    const T* dyb = dy + static_cast<int64_t>(bi) * c_out * len;
    T* dxb = dx ? dx + static_cast<int64_t>(bi) * c_in * len : nullptr;
    for (int co = 0; co < c_out; ++co) {
      const T* dyrow = dyb + static_cast<int64_t>(co) * len;
      T acc_b = T(0);
      for (int t = 0; t < len; ++t) acc_b += dyrow[t];
      db[co] += acc_b;
      const T* wrow = w + static_cast<int64_t>(co) * c_in * k;
      T* dwrow = dw + static_cast<int64_t>(co) * c_in * k;
      for (int ci = 0; ci < c_in; ++ci) {
        const T* xrow = xb + static_cast<int64_t>(ci) * len;
        const T* wk = wrow + static_cast<int64_t>(ci) * k;
        T* dwk = dwrow + static_cast<int64_t>(ci) * k;
        for (int j = 0; j < k; ++j) {
          const int shift = j - pad;
          const int t0 = std::max(0, -shift);
          const int t1 = std::min(len, len - shift);
          // dw[j] += <dy, shifted x>; the simd reduction fixes the
          // summation order per binary, keeping runs bit-identical
          const T* xs = xrow + shift;
          T acc = T(0);
#pragma omp simd reduction(+ : acc)
          for (int t = t0; t < t1; ++t) acc += dyrow[t] * xs[t];
          dwk[j] += acc;
        }
        if (dxb) {
          // dx[t+shift] += w[j] * dy[t], one contiguous axpy per tap
          for (int j = 0; j < k; ++j) {
            const int shift = j - pad;
            const int t0 = std::max(0, -shift);
            const int t1 = std::min(len, len - shift);
            T* dxs = dxb + static_cast<int64_t>(ci) * len + shift;
            const T wj = wk[j];
            for (int t = t0; t < t1; ++t) dxs[t] += wj * dyrow[t];
          }
        }
      }
    }
  }
}

namespace {

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& layer) {
  for (const T& v : t.data)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError("non-finite activation in " + layer);
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.data)
    if (v < T(0)) v = T(0);
}

}  // namespace

template <typename T>
void inverted_dropout(Tensor<T>& t, double p, RandomStream& rng,
                      std::vector<uint8_t>& mask) {
  mask.resize(t.data.size());
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (size_t i = 0; i < t.data.size(); ++i) {
    if (rng.uniform() < p) {
      mask[i] = 0;
      t.data[i] = T(0);
    } else {
      mask[i] = 1;
      t.data[i] *= scale;
    }
  }
}

template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const ResNetConfig& config,
                  const Tensor<T>& x, RunMode mode, RandomStream* rng,
                  ForwardCache<T>* cache) {
  config.validate();
  if (x.shape.size() != 3 || x.shape[1] != config.horizon ||
      x.shape[2] != config.d_in)
    throw StructuralError("forward: input must be [batch, horizon, d_in]");
  const int batch = x.shape[0];
  const int len = config.horizon;
  const int f = config.filters;
  const bool use_dropout =
      config.dropout > 0.0 &&
      (mode == RunMode::Train || mode == RunMode::McDropout);
  if (use_dropout && !rng)
    throw ValidationError("forward: dropout requires a random stream");

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.block_act.assign(config.blocks, Tensor<T>());
  c.x_chain.assign(config.blocks, Tensor<T>());
  c.block_mask.assign(config.blocks, {});
  c.fc_mask.clear();

  // permute [batch, len, d_in] -> [batch, d_in, len]
  c.x_perm = Tensor<T>({batch, config.d_in, len});
  for (int bi = 0; bi < batch; ++bi)
    for (int t = 0; t < len; ++t)
      for (int ci = 0; ci < config.d_in; ++ci)
        c.x_perm.data[(static_cast<int64_t>(bi) * config.d_in + ci) * len + t] =
            x.data[(static_cast<int64_t>(bi) * len + t) * config.d_in + ci];

  c.x0 = Tensor<T>({batch, f, len});
  conv1d_forward(c.x_perm.ptr(), batch, config.d_in, len, params.proj.w.ptr(),
                 params.proj.b.ptr(), f, 1, c.x0.ptr());
  relu_inplace(c.x0);
  check_finite(c.x0, "projection");

  const Tensor<T>* prev = &c.x0;
  for (int i = 0; i < config.blocks; ++i) {
    Tensor<T> act({batch, f, len});
    conv1d_forward(prev->ptr(), batch, f, len, params.block[i].w.ptr(),
                   params.block[i].b.ptr(), f, config.kernel, act.ptr());
    relu_inplace(act);
    c.block_act[i] = act;  // pre-dropout activation, for the ReLU gradient
    if (use_dropout)
      inverted_dropout(act, config.dropout, *rng, c.block_mask[i]);
    Tensor<T> next({batch, f, len});
    for (int64_t idx = 0; idx < next.size(); ++idx)
      next.data[idx] = prev->data[idx] + act.data[idx];
    check_finite(next, "residual block " + std::to_string(i + 1));
    c.x_chain[i] = std::move(next);
    prev = &c.x_chain[i];
  }

  // global average pooling over time
  c.gap = Tensor<T>({batch, f});
  for (int bi = 0; bi < batch; ++bi)
    for (int ch = 0; ch < f; ++ch) {
      const T* row = prev->ptr() + (static_cast<int64_t>(bi) * f + ch) * len;
      T acc = T(0);
      for (int t = 0; t < len; ++t) acc += row[t];
      c.gap.data[static_cast<int64_t>(bi) * f + ch] = acc / static_cast<T>(len);
    }
  c.gap_act = c.gap;
  relu_inplace(c.gap_act);
  c.z = c.gap_act;
  if (use_dropout) inverted_dropout(c.z, config.dropout, *rng, c.fc_mask);
  check_finite(c.z, "head");

  c.y_hat = Tensor<T>({batch, config.d_out});
  for (int bi = 0; bi < batch; ++bi)
    for (int o = 0; o < config.d_out; ++o) {
      T acc = params.fc_b.data[o];
      const T* zrow = c.z.ptr() + static_cast<int64_t>(bi) * f;
      for (int ch = 0; ch < f; ++ch)
        acc += zrow[ch] *
               params.fc_w.data[static_cast<int64_t>(ch) * config.d_out + o];
      c.y_hat.data[static_cast<int64_t>(bi) * config.d_out + o] =
          T(1) / (T(1) + std::exp(-acc));
    }
  check_finite(c.y_hat, "sigmoid output");
  return c.y_hat;
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params,
                        const ResNetConfig& config,
                        const ForwardCache<T>& cache, const Tensor<T>& dy) {
  const int batch = dy.shape[0];
  const int len = config.horizon;
  const int f = config.filters;
  ModelParams<T> grads = ModelParams<T>::zeros(config);
  const T inv_keep = static_cast<T>(1.0 / (1.0 - config.dropout));

  // sigmoid
  Tensor<T> dlogit({batch, config.d_out});
  for (int64_t i = 0; i < dlogit.size(); ++i) {
    T y = cache.y_hat.data[i];
    dlogit.data[i] = dy.data[i] * y * (T(1) - y);
  }

  // dense head
  Tensor<T> dz({batch, f});
  for (int bi = 0; bi < batch; ++bi) {
    const T* zrow = cache.z.ptr() + static_cast<int64_t>(bi) * f;
    const T* drow = dlogit.ptr() + static_cast<int64_t>(bi) * config.d_out;
    for (int o = 0; o < config.d_out; ++o) grads.fc_b.data[o] += drow[o];
    for (int ch = 0; ch < f; ++ch) {
      T acc = T(0);
      for (int o = 0; o < config.d_out; ++o) {
        grads.fc_w.data[static_cast<int64_t>(ch) * config.d_out + o] +=
            zrow[ch] * drow[o];
        acc += params.fc_w.data[static_cast<int64_t>(ch) * config.d_out + o] *
               drow[o];
      }
      dz.data[static_cast<int64_t>(bi) * f + ch] = acc;
    }
  }

  // head dropout + ReLU + GAP broadcast
  if (!cache.fc_mask.empty())
    for (int64_t i = 0; i < dz.size(); ++i)
      dz.data[i] = cache.fc_mask[i] ? dz.data[i] * inv_keep : T(0);
  for (int64_t i = 0; i < dz.size(); ++i)
    if (cache.gap_act.data[i] <= T(0)) dz.data[i] = T(0);

  Tensor<T> dx({batch, f, len});
  const T inv_len = T(1) / static_cast<T>(len);
  for (int bi = 0; bi < batch; ++bi)
    for (int ch = 0; ch < f; ++ch) {
      T g = dz.data[static_cast<int64_t>(bi) * f + ch] * inv_len;
      T* row = dx.ptr() + (static_cast<int64_t>(bi) * f + ch) * len;
      std::fill(row, row + len, g);
    }

  // residual blocks in reverse: dx flows through both the skip and the
  // dropout(ReLU(conv)) branch
  for (int i = config.blocks - 1; i >= 0; --i) {
    Tensor<T> dbranch = dx;
    if (!cache.block_mask[i].empty()) {
      const auto& mask = cache.block_mask[i];
      for (int64_t idx = 0; idx < dbranch.size(); ++idx)
        dbranch.data[idx] = mask[idx] ? dbranch.data[idx] * inv_keep : T(0);
    }
    const auto& act = cache.block_act[i];
    for (int64_t idx = 0; idx < dbranch.size(); ++idx)
      if (act.data[idx] <= T(0)) dbranch.data[idx] = T(0);

    const Tensor<T>& input = i == 0 ? cache.x0 : cache.x_chain[i - 1];
    Tensor<T> dinput({batch, f, len});
    conv1d_backward(input.ptr(), batch, f, len, params.block[i].w.ptr(), f,
                    config.kernel, dbranch.ptr(), dinput.ptr(),
                    grads.block[i].w.ptr(), grads.block[i].b.ptr());
    for (int64_t idx = 0; idx < dx.size(); ++idx)
      dx.data[idx] += dinput.data[idx];
  }

  // projection ReLU + conv1x1 (input gradient not needed)
  for (int64_t idx = 0; idx < dx.size(); ++idx)
    if (cache.x0.data[idx] <= T(0)) dx.data[idx] = T(0);
  conv1d_backward(cache.x_perm.ptr(), batch, config.d_in, len,
                  params.proj.w.ptr(), f, 1, dx.ptr(),
                  static_cast<T*>(nullptr), grads.proj.w.ptr(),
                  grads.proj.b.ptr());
  return grads;
}

template <typename T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& y_hat,
                                      const Tensor<T>& y) {
  if (y_hat.shape != y.shape)
    throw StructuralError("mse_loss: shape mismatch");
  Tensor<T> grad(y_hat.shape);
  const double count = static_cast<double>(y_hat.size());
  double loss = 0.0;
  for (int64_t i = 0; i < y_hat.size(); ++i) {
    double d =
        static_cast<double>(y_hat.data[i]) - static_cast<double>(y.data[i]);
    loss += d * d;
    grad.data[i] = static_cast<T>(2.0 * d / count);
  }
  return {loss / count, std::move(grad)};
}

template <typename T>
AdamState<T> AdamState<T>::init(ModelParams<T>& params, double lr_in) {
  AdamState<T> s;
  s.lr = lr_in;
  for (auto& [name, tensor] : parameter_list(params)) {
    (void)name;
    s.m.emplace_back(tensor->shape);
    s.v.emplace_back(tensor->shape);
  }
  return s;
}

template <typename T>
void adam_step(ModelParams<T>& params, ModelParams<T>& grads,
               AdamState<T>& state) {
  auto ps = parameter_list(params);
  auto gs = parameter_list(grads);
  if (ps.size() != state.m.size())
    throw StructuralError("adam state does not match parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < ps.size(); ++i) {
    Tensor<T>& p = *ps[i].second;
    const Tensor<T>& g = *gs[i].second;
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    if (p.size() != g.size())
      throw StructuralError("gradient shape mismatch for " + ps[i].first);
    for (int64_t e = 0; e < p.size(); ++e) {
      double ge = static_cast<double>(g.data[e]);
      double me = state.beta1 * m.data[e] + (1.0 - state.beta1) * ge;
      double ve = state.beta2 * v.data[e] + (1.0 - state.beta2) * ge * ge;
      m.data[e] = static_cast<T>(me);
      v.data[e] = static_cast<T>(ve);
      double update = state.lr * (me / bc1) / (std::sqrt(ve / bc2) + state.eps);
      p.data[e] = static_cast<T>(static_cast<double>(p.data[e]) - update);
    }
  }
}

namespace {

Tensor<float> batch_inputs(const Dataset& ds,
                           const std::vector<int64_t>& records, size_t lo,
                           size_t hi) {
  const auto& mf = ds.manifest;
  Tensor<float> x({static_cast<int>(hi - lo), mf.horizon, mf.d_in});
  for (size_t r = lo; r < hi; ++r) {
    const auto& rec = ds.records[records[r]];
    std::copy(
        rec.x.begin(), rec.x.end(),
        x.data.begin() + static_cast<int64_t>(r - lo) * mf.horizon * mf.d_in);
  }
  return x;
}

Tensor<float> batch_targets(const Dataset& ds,
                            const std::vector<int64_t>& records, size_t lo,
                            size_t hi) {
  Tensor<float> y({static_cast<int>(hi - lo), kNumCoefficients});
  for (size_t r = lo; r < hi; ++r) {
    const auto& rec = ds.records[records[r]];
    for (int i = 0; i < kNumCoefficients; ++i)
      y.data[static_cast<int64_t>(r - lo) * kNumCoefficients + i] =
          static_cast<float>(rec.theta_norm[i]);
  }
  return y;
}

double evaluate_mse(const ModelParams<float>& params,
                    const ResNetConfig& config, const Dataset& ds,
                    const std::vector<int64_t>& records, int batch_size) {
  double sq_sum = 0.0;
  int64_t count = 0;
  for (size_t lo = 0; lo < records.size();
       lo += static_cast<size_t>(batch_size)) {
    size_t hi = std::min(records.size(), lo + batch_size);
    auto x = batch_inputs(ds, records, lo, hi);
    auto y = batch_targets(ds, records, lo, hi);
    auto y_hat = forward(params, config, x, RunMode::Infer);
    for (int64_t i = 0; i < y_hat.size(); ++i) {
      double d =
          static_cast<double>(y_hat.data[i]) - static_cast<double>(y.data[i]);
      sq_sum += d * d;
    }
    count += y_hat.size();
  }
  return sq_sum / static_cast<double>(count);
}

}  // namespace

TrainResult train(const Dataset& dataset, const ResNetConfig& net_config,
                  const TrainConfig& train_config) {
  ResNetConfig config = net_config;
  config.d_in = dataset.manifest.d_in;
  config.horizon = dataset.manifest.horizon;
  config.validate();
  if (train_config.batch_size < 1 || train_config.max_epochs < 1 ||
      train_config.patience < 1)
    throw ValidationError("train config values must be positive");
  if (train_config.patience > train_config.max_epochs)
    throw ValidationError("patience must not exceed max epochs");

  auto train_records = dataset.split_records(0);
  auto val_records = dataset.split_records(1);
  if (train_records.empty() || val_records.empty())
    throw ValidationError("train and validation splits must be non-empty");

  RandomStream init_rng(derive_seed(train_config.seed, 0x1717));
  RandomStream shuffle_rng(derive_seed(train_config.seed, 0x5408));
  RandomStream noise_rng(derive_seed(train_config.seed, 0x4015));
  RandomStream dropout_rng(derive_seed(train_config.seed, 0xD409));

  ModelParams<float> params = ModelParams<float>::init(config, init_rng);
  AdamState<float> adam = AdamState<float>::init(params, train_config.lr);

  ModelParams<float> best_params = params;
  double best_val = INFINITY;
  int epochs_since_best = 0;
  std::vector<EpochRecord> history;

  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_records.begin(), train_records.end());

    double train_sq = 0.0;
    int64_t train_count = 0;
    for (size_t lo = 0; lo < train_records.size();
         lo += static_cast<size_t>(train_config.batch_size)) {
      size_t hi = std::min(train_records.size(),
                           lo + static_cast<size_t>(train_config.batch_size));
      auto x = batch_inputs(dataset, train_records, lo, hi);
      if (train_config.noise_sigma > 0.0)
        for (auto& v : x.data)
          v += static_cast<float>(
              noise_rng.normal(0.0, train_config.noise_sigma));
      auto y = batch_targets(dataset, train_records, lo, hi);

      ForwardCache<float> cache;
      auto y_hat =
          forward(params, config, x, RunMode::Train, &dropout_rng, &cache);
      auto [loss, dy] = mse_loss(y_hat, y);
      if (!std::isfinite(loss))
        throw NumericError(
            "NaN loss at epoch " + std::to_string(epoch) + " batch " +
            std::to_string(lo / static_cast<size_t>(train_config.batch_size)));
      train_sq += loss * static_cast<double>(y_hat.size());
      train_count += y_hat.size();
      auto grads = backward(params, config, cache, dy);
      adam_step(params, grads, adam);
    }

    double val_loss = evaluate_mse(params, config, dataset, val_records,
                                   train_config.batch_size);
    if (!std::isfinite(val_loss))
      throw NumericError("NaN validation loss at epoch " +
                         std::to_string(epoch));

    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    history.push_back({epoch, train_sq / static_cast<double>(train_count),
                       val_loss, best_val});
    if (epochs_since_best >= train_config.patience) break;
  }

  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.params = std::move(best_params);
  result.checkpoint.best_val_loss = best_val;
  result.checkpoint.meta.feature_order = dataset.manifest.feature_order;
  result.checkpoint.meta.human_total = dataset.manifest.human_total;
  result.checkpoint.meta.mosquito_total = dataset.manifest.mosquito_total;
  result.checkpoint.meta.human_columns = dataset.manifest.human_columns;
  result.checkpoint.meta.mosquito_columns = dataset.manifest.mosquito_columns;
  result.checkpoint.meta.target_gains = dataset.manifest.target_gains;
  result.checkpoint.meta.train_seed = train_config.seed;
  result.checkpoint.meta.dataset_config_hash = dataset.manifest.config_hash;
  result.history = std::move(history);
  return result;
}

GradCheckReport gradient_check(const ResNetConfig& config, double tolerance,
                               uint64_t seed) {
  ResNetConfig cfg = config;
  if (cfg.dropout != 0.0)
    throw ValidationError("gradient_check requires dropout 0");
  cfg.validate();
  if (cfg.param_count() > 100000)
    throw ValidationError("gradient_check config too large");

  RandomStream rng(seed);
  ModelParams<double> params = ModelParams<double>::init(cfg, rng);
  const int batch = 2;
  Tensor<double> x({batch, cfg.horizon, cfg.d_in});
  for (auto& v : x.data) v = rng.uniform_range(-1.0, 1.0);
  Tensor<double> y({batch, cfg.d_out});
  for (auto& v : y.data) v = rng.uniform();

  auto loss_at = [&](ModelParams<double>& p) {
    auto y_hat = forward(p, cfg, x, RunMode::Infer);
    return mse_loss(y_hat, y).first;
  };

  ForwardCache<double> cache;
  auto y_hat = forward(params, cfg, x, RunMode::Infer, nullptr, &cache);
  auto grads = backward(params, cfg, cache, mse_loss(y_hat, y).second);

  GradCheckReport report;
  const double h = 1e-5;
  auto ps = parameter_list(params);
  auto gs = parameter_list(grads);
  for (size_t i = 0; i < ps.size(); ++i) {
    Tensor<double>& p = *ps[i].second;
    const Tensor<double>& g = *gs[i].second;
    for (int64_t e = 0; e < p.size(); ++e) {
      double orig = p.data[e];
      p.data[e] = orig + h;
      double up = loss_at(params);
      p.data[e] = orig - h;
      double down = loss_at(params);
      p.data[e] = orig;
      double numeric = (up - down) / (2.0 * h);
      double analytic = g.data[e];
      double rel = std::abs(analytic - numeric) /
                   (std::abs(analytic) + std::abs(numeric) + 1e-8);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = ps[i].first;
      }
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

namespace {

json config_to_json(const ResNetConfig& c) {
  return json{{"filters", c.filters}, {"kernel", c.kernel},
              {"blocks", c.blocks},   {"dropout", c.dropout},
              {"d_in", c.d_in},       {"d_out", c.d_out},
              {"horizon", c.horizon}};
}

ResNetConfig config_from_json(const json& j) {
  ResNetConfig c;
  c.filters = j.at("filters");
  c.kernel = j.at("kernel");
  c.blocks = j.at("blocks");
  c.dropout = j.at("dropout");
  c.d_in = j.at("d_in");
  c.d_out = j.at("d_out");
  c.horizon = j.at("horizon");
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path())
    std::filesystem::create_directories(p.parent_path());

  std::vector<float> payload;
  auto& params = const_cast<ModelParams<float>&>(checkpoint.params);
  for (auto& [name, tensor] : parameter_list(params)) {
    (void)name;
    payload.insert(payload.end(), tensor->data.begin(), tensor->data.end());
  }

  json header;
  header["format"] = "spn-checkpoint";
  header["version"] = 1;
  header["config"] = config_to_json(checkpoint.config);
  header["best_val_loss"] = checkpoint.best_val_loss;
  header["param_count"] = payload.size();
  header["payload_fnv"] =
      to_hex(fnv1a64(payload.data(), payload.size() * sizeof(float)));
  const auto& meta = checkpoint.meta;
  header["meta"] = {{"feature_order", meta.feature_order},
                    {"human_total", meta.human_total},
                    {"mosquito_total", meta.mosquito_total},
                    {"human_columns", meta.human_columns},
                    {"mosquito_columns", meta.mosquito_columns},
                    {"target_gains", meta.target_gains},
                    {"train_seed", meta.train_seed},
                    {"dataset_config_hash", meta.dataset_config_hash}};
  std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write("SPNCKPT1", 8);
  auto len = static_cast<uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(len));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "SPNCKPT1", 8) != 0)
    throw IoError("not a checkpoint file");
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), len);
  if (!in) throw IoError("truncated checkpoint header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.at("format") != "spn-checkpoint")
    throw IoError("unexpected checkpoint format");

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));
  ckpt.config.validate();
  ckpt.best_val_loss = header.at("best_val_loss");
  const auto& meta = header.at("meta");
  ckpt.meta.feature_order =
      meta.at("feature_order").get<std::vector<std::string>>();
  ckpt.meta.human_total = meta.at("human_total");
  ckpt.meta.mosquito_total = meta.at("mosquito_total");
  ckpt.meta.human_columns = meta.at("human_columns").get<std::vector<int>>();
  ckpt.meta.mosquito_columns =
      meta.at("mosquito_columns").get<std::vector<int>>();
  auto gains = meta.at("target_gains").get<std::vector<double>>();
  if (gains.size() != kNumCoefficients)
    throw IoError("checkpoint target_gains has wrong length");
  std::copy(gains.begin(), gains.end(), ckpt.meta.target_gains.begin());
  ckpt.meta.train_seed = meta.at("train_seed");
  ckpt.meta.dataset_config_hash = meta.at("dataset_config_hash");

  uint64_t expected = header.at("param_count");
  if (expected != static_cast<uint64_t>(ckpt.config.param_count()))
    throw IoError("checkpoint parameter count does not match its config");

  std::vector<float> payload(expected);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!in) throw IoError("truncated checkpoint payload");
  if (to_hex(fnv1a64(payload.data(), payload.size() * sizeof(float))) !=
      header.at("payload_fnv"))
    throw IoError("checkpoint payload hash mismatch");

  ckpt.params = ModelParams<float>::zeros(ckpt.config);
  size_t offset = 0;
  for (auto& [name, tensor] : parameter_list(ckpt.params)) {
    (void)name;
    std::copy(payload.begin() + static_cast<int64_t>(offset),
              payload.begin() + static_cast<int64_t>(offset) +
                  static_cast<int64_t>(tensor->data.size()),
              tensor->data.begin());
    offset += tensor->data.size();
  }
  return ckpt;
}

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history '" + path + "'");
  out << "epoch,train_loss,val_loss,best_so_far\n";
  for (const auto& row : history)
    out << row.epoch << ',' << format_double(row.train_loss) << ','
        << format_double(row.val_loss) << ',' << format_double(row.best_val)
        << '\n';
}

// explicit instantiations: float for training, double for verification
template struct ModelParams<float>;
template struct ModelParams<double>;
template struct AdamState<float>;
template struct AdamState<double>;

template std::vector<std::pair<std::string, Tensor<float>*>> parameter_list(
    ModelParams<float>&);
template std::vector<std::pair<std::string, Tensor<double>*>> parameter_list(
    ModelParams<double>&);

template void inverted_dropout(Tensor<float>&, double, RandomStream&,
                               std::vector<uint8_t>&);
template void inverted_dropout(Tensor<double>&, double, RandomStream&,
                               std::vector<uint8_t>&);

template void conv1d_forward(const float*, int, int, int, const float*,
                             const float*, int, int, float*);
template void conv1d_forward(const double*, int, int, int, const double*,
                             const double*, int, int, double*);
template void conv1d_backward(const float*, int, int, int, const float*, int,
                              int, const float*, float*, float*, float*);
template void conv1d_backward(const double*, int, int, int, const double*,
                              int, int, const double*, double*, double*,
                              double*);

template Tensor<float> forward(const ModelParams<float>&, const ResNetConfig&,
                               const Tensor<float>&, RunMode, RandomStream*,
                               ForwardCache<float>*);
template Tensor<double> forward(const ModelParams<double>&,
                                const ResNetConfig&, const Tensor<double>&,
                                RunMode, RandomStream*, ForwardCache<double>*);
template ModelParams<float> backward(const ModelParams<float>&,
                                     const ResNetConfig&,
                                     const ForwardCache<float>&,
                                     const Tensor<float>&);
template ModelParams<double> backward(const ModelParams<double>&,
                                      const ResNetConfig&,
                                      const ForwardCache<double>&,
                                      const Tensor<double>&);
template std::pair<double, Tensor<float>> mse_loss(const Tensor<float>&,
                                                   const Tensor<float>&);
template std::pair<double, Tensor<double>> mse_loss(const Tensor<double>&,
                                                    const Tensor<double>&);
template void adam_step(ModelParams<float>&, ModelParams<float>&,
                        AdamState<float>&);
template void adam_step(ModelParams<double>&, ModelParams<double>&,
                        AdamState<double>&);

}  // namespace spn
