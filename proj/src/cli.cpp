#include "spn/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <unistd.h>

namespace spn {

namespace fs = std::filesystem;

namespace {

// one run per output directory; stale locks must be removed by hand
class LockFile {
 public:
  explicit LockFile(const std::string& dir) {
    fs::create_directories(dir);
    path_ = (fs::path(dir) / ".spn-lock").string();
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw ValidationError("output directory '" + dir +
                            "' is locked by another run (remove " + path_ +
                            " if stale)");
  }
  ~LockFile() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

template <typename Fn>
int run_command(const char* name, Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const std::exception& e) {
    fprintf(stderr, "spn %s: error: %s\n", name, e.what());
    return exit_code_for(e);
  }
}

std::vector<PatchCovariateSeries> build_covariates(const RunConfig& config) {
  if (config.covariates.synthetic)
    return synthetic_covariates(config.master_seed, config.covariates.horizon,
                                config.covariates.patches);
  if (config.paths.weather_csv.empty())
    throw ValidationError("paths.weather_csv required when synthetic=false");
  auto records = read_weather_csv(config.paths.weather_csv);
  auto series = preprocess_daily(records, config.covariates.horizon);
  for (int p = 1; p <= config.covariates.patches; ++p) {
    bool found = false;
    for (const auto& s : series)
      if (s.patch == p) found = true;
    if (!found)
      throw ConfigError("patch " + std::to_string(p) +
                        " has no stations in the weather CSV");
  }
  // keep exactly the configured patches, in id order
  std::vector<PatchCovariateSeries> out;
  for (int p = 1; p <= config.covariates.patches; ++p)
    for (auto& s : series)
      if (s.patch == p) out.push_back(std::move(s));
  return out;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const GenerationFailure*>(&e)) return kExitGeneration;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitInput;
}

int cmd_covariates(const RunConfig& config) {
  return run_command("covariates", [&] {
    LockFile lock(config.paths.covariate_dir);
    auto series = build_covariates(config);
    std::vector<BasisDaily> basis;
    basis.reserve(series.size());
    for (const auto& s : series)
      basis.push_back(evaluate_basis(s, config.model.basis));

    write_covariate_cache(config.paths.covariate_dir, series, basis);
    write_resolved_config(config, config.paths.covariate_dir);

    int days = series.empty() ? 0 : series[0].days();
    double active = 0.0, total = 0.0;
    for (const auto& b : basis)
      for (double v : b.bb) {
        total += 1.0;
        if (v > 0.0) active += 1.0;
      }
    printf("covariates: %d days, %zu patches, biting response > 0 on %.1f%% "
           "of patch-days\n",
           days, series.size(), total > 0 ? 100.0 * active / total : 0.0);
  });
}

int cmd_generate(const RunConfig& config) {
  return run_command("generate", [&] {
    std::vector<PatchCovariateSeries> series;
    std::vector<BasisDaily> basis;
    load_covariate_cache(config.paths.covariate_dir,
                         config.covariates.patches, series, basis);

    LockFile lock(config.paths.dataset_dir);
    GenerateOptions options;
    options.n = config.dataset.n;
    options.runs_per_sample = config.dataset.runs_per_sample;
    options.dropout = config.dataset.dropout;
    options.master_seed = config.master_seed;
    options.split_fractions = config.dataset.split_fractions;
    options.workers = config.workers;
    options.config_json = dataset_identity_json(config);

    auto t0 = std::chrono::steady_clock::now();
    auto dataset = generate_dataset(config.model, series, options);
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();

    save_dataset(dataset, config.paths.dataset_dir);
    write_resolved_config(config, config.paths.dataset_dir);

    int64_t failures =
        options.n - static_cast<int64_t>(dataset.manifest.sample_ids.size());
    printf("generate: %lld samples x %d runs in %.1f s, %lld failures\n",
           static_cast<long long>(dataset.manifest.sample_ids.size()),
           dataset.manifest.runs_per_sample, secs,
           static_cast<long long>(failures));
  });
}

int cmd_train(const RunConfig& config) {
  return run_command("train", [&] {
    auto dataset = load_dataset(config.paths.dataset_dir);

    fs::path ckpt_path(config.paths.checkpoint);
    fs::path train_dir =
        ckpt_path.has_parent_path() ? ckpt_path.parent_path() : fs::path(".");
    LockFile lock(train_dir.string());

    auto result = train(dataset, config.network, config.train);
    save_checkpoint(result.checkpoint, config.paths.checkpoint);
    write_history_csv(result.history, (train_dir / "history.csv").string());
    write_resolved_config(config, train_dir.string());

    printf("train: %zu epochs, best validation loss %s\n",
           result.history.size(),
           format_double(result.checkpoint.best_val_loss).c_str());
  });
}

namespace {

std::vector<float> read_trajectory_csv(const std::string& path,
                                       const Checkpoint& ckpt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty trajectory file");
  auto header = split_csv_line(line);
  const auto& features = ckpt.meta.feature_order;
  if (header.size() != features.size() + 1 || header[0] != "day")
    throw StructuralError("trajectory header must be day,<feature...>");
  for (size_t i = 0; i < features.size(); ++i)
    if (header[i + 1] != features[i])
      throw StructuralError("trajectory feature order does not match the "
                            "checkpoint (expected " +
                            features[i] + " at column " +
                            std::to_string(i + 1) + ")");

  const int d_in = ckpt.config.d_in;
  std::vector<double> scale(d_in, 1.0);
  for (int c : ckpt.meta.human_columns) scale[c] = ckpt.meta.human_total;
  for (int c : ckpt.meta.mosquito_columns)
    scale[c] = ckpt.meta.mosquito_total;

  std::vector<float> x;
  x.reserve(static_cast<size_t>(ckpt.config.horizon) * d_in);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d_in + 1)
      throw StructuralError("trajectory row has wrong arity");
    for (int c = 0; c < d_in; ++c)
      x.push_back(static_cast<float>(std::stod(cells[c + 1]) / scale[c]));
    ++rows;
  }
  if (rows != ckpt.config.horizon)
    throw StructuralError("trajectory has " + std::to_string(rows) +
                          " days, checkpoint expects " +
                          std::to_string(ckpt.config.horizon));
  return x;
}

}  // namespace

int cmd_infer(const RunConfig& config, const std::string& trajectory_csv,
              const std::string& output_csv) {
  return run_command("infer", [&] {
    auto ckpt = load_checkpoint(config.paths.checkpoint);
    auto x = read_trajectory_csv(trajectory_csv, ckpt);

    uint64_t seed = derive_seed(config.master_seed, 0x1F);
    auto summary = mc_dropout_predict(ckpt, x, config.uq, seed);
    auto raw = denormalize_summary(summary, ckpt.meta.target_gains);

    fs::path out_path(output_csv);
    if (out_path.has_parent_path())
      fs::create_directories(out_path.parent_path());
    std::ofstream out(output_csv);
    if (!out) throw IoError("cannot write '" + output_csv + "'");
    out << "# passes=" << config.uq.passes << ",tau_inv="
        << format_double(config.uq.tau_inv) << ",mc_dropout="
        << (config.uq.use_dropout ? "true" : "false") << ",seed=" << seed
        << '\n';
    out << "parameter,mean_norm,std_norm,mean_raw,std_raw\n";
    for (int i = 0; i < kNumCoefficients; ++i)
      out << kCoefficientNames[i] << ',' << format_double(summary.mean[i])
          << ',' << format_double(summary.stddev[i]) << ','
          << format_double(raw.mean[i]) << ',' << format_double(raw.stddev[i])
          << '\n';
    printf("infer: %d passes, wrote %s\n", config.uq.passes,
           output_csv.c_str());
  });
}

int cmd_evaluate(const RunConfig& config) {
  return run_command("evaluate", [&] {
    auto dataset = load_dataset(config.paths.dataset_dir);
    auto ckpt = load_checkpoint(config.paths.checkpoint);
    if (dataset.manifest.d_in != ckpt.config.d_in ||
        dataset.manifest.horizon != ckpt.config.horizon)
      throw StructuralError("dataset shape does not match the checkpoint");

    auto test_records = dataset.split_records(2);
    if (test_records.empty())
      throw ValidationError("test split is empty");

    LockFile lock(config.paths.evaluate_dir);

    std::vector<PosteriorSummary> summaries;
    std::vector<std::array<double, kNumCoefficients>> truths;
    std::vector<PredictionRow> rows;
    std::ofstream samples_out(
        fs::path(config.paths.evaluate_dir) / "posterior_samples.bin",
        std::ios::binary);

    for (size_t j = 0; j < test_records.size(); ++j) {
      const auto& rec = dataset.records[test_records[j]];
      uint64_t seed = derive_seed(config.master_seed, 0xE7A1,
                                  static_cast<uint64_t>(j));
      auto summary = mc_dropout_predict(ckpt, rec.x, config.uq, seed);
      for (double v : summary.samples) {
        float f = static_cast<float>(v);
        samples_out.write(reinterpret_cast<const char*>(&f), sizeof(f));
      }
      for (int i = 0; i < kNumCoefficients; ++i)
        rows.push_back({static_cast<int64_t>(test_records[j]), rec.sample_id,
                        rec.run, i, rec.theta_norm[i], summary.mean[i],
                        summary.stddev[i]});
      truths.push_back(rec.theta_norm);
      summaries.push_back(std::move(summary));
    }

    auto report = compute_metrics(summaries, truths);
    auto curves = calibration_curve(summaries, truths, config.uq.levels);

    fs::path dir(config.paths.evaluate_dir);
    write_metrics_csv(report, (dir / "metrics.csv").string());
    write_calibration_csv(curves, config.uq.levels,
                          (dir / "calibration.csv").string());
    write_predictions_csv(rows, (dir / "predictions.csv").string());
    write_resolved_config(config, config.paths.evaluate_dir);

    printf("evaluate: %zu test records, overall RMSE %s\n",
           test_records.size(), format_double(report.overall_rmse).c_str());
  });
}

int cmd_report(const RunConfig& config) {
  return run_command("report", [&] {
    LockFile lock(config.paths.report_dir);
    write_report_svgs(config.paths.evaluate_dir, config.paths.report_dir);
    write_resolved_config(config, config.paths.report_dir);
    printf("report: plots written to %s\n", config.paths.report_dir.c_str());
  });
}

}  // namespace spn
