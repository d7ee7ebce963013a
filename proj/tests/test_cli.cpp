#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "spn/cli.hpp"

using namespace spn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

// minimal well-formedness check: tags balance, one root element
bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  int roots = 0;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '<') {
      ++i;
      continue;
    }
    size_t end = text.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = text.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;  // declaration/comment
    if (tag[0] == '/') {
      std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    bool self_closing = tag.back() == '/';
    std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) {
      if (++roots > 1) return false;
      if (self_closing) continue;
    }
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty() && roots == 1;
}

struct PipelineDirs {
  fs::path root;
  RunConfig config;

  explicit PipelineDirs(const std::string& tag, uint64_t seed = 42) {
    root = fs::temp_directory_path() / ("spn_cli_" + tag);
    fs::remove_all(root);
    fs::create_directories(root);
    config.master_seed = seed;
    config.covariates.horizon = 50;
    config.dataset.n = 24;
    config.network.filters = 12;
    config.network.kernel = 3;
    config.network.blocks = 1;
    config.train.batch_size = 4;
    config.train.max_epochs = 3;
    config.train.patience = 3;
    config.uq.passes = 8;
    config.paths.covariate_dir = (root / "covariates").string();
    config.paths.dataset_dir = (root / "dataset").string();
    config.paths.checkpoint = (root / "train" / "checkpoint.bin").string();
    config.paths.evaluate_dir = (root / "evaluate").string();
    config.paths.report_dir = (root / "report").string();
  }
  ~PipelineDirs() { fs::remove_all(root); }
};

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      out[entry.path().lexically_relative(dir).string()] =
          slurp(entry.path());
  return out;
}

}  // namespace

TEST_CASE("covariates command: determinism, cache shape, error paths") {
  PipelineDirs pipe("cov");
  REQUIRE(cmd_covariates(pipe.config) == 0);

  // cache has horizon rows per patch and the resolved config is copied
  for (int p = 1; p <= 2; ++p) {
    auto text = slurp(fs::path(pipe.config.paths.covariate_dir) /
                      ("patch_" + std::to_string(p) + ".csv"));
    CHECK(count_occurrences(text, "\n") == 51);  // header + 50 days
  }
  auto resolved = slurp(fs::path(pipe.config.paths.covariate_dir) /
                        "resolved_config.json");
  CHECK(resolved.find("\"master_seed\": 42") != std::string::npos);

  // rerun writes byte-identical files
  auto before = dir_bytes(pipe.config.paths.covariate_dir);
  REQUIRE(cmd_covariates(pipe.config) == 0);
  CHECK(dir_bytes(pipe.config.paths.covariate_dir) == before);

  // weather CSV without a patch column: exit 2
  auto csv = pipe.root / "weather.csv";
  {
    std::ofstream out(csv);
    out << "date,station,t_avg,t_min,t_max,rh_min,rh_max,unit\n";
    out << "2022-01-01,s1,20,18,22,40,60,C\n";
  }
  RunConfig bad = pipe.config;
  bad.covariates.synthetic = false;
  bad.paths.weather_csv = csv.string();
  CHECK(cmd_covariates(bad) == kExitInput);
}

TEST_CASE("generate command: layout arithmetic and schedule independence") {
  PipelineDirs pipe("gen");
  REQUIRE(cmd_covariates(pipe.config) == 0);
  REQUIRE(cmd_generate(pipe.config) == 0);

  auto bin = fs::path(pipe.config.paths.dataset_dir) / "samples.bin";
  CHECK(fs::file_size(bin) == 24u * (13u + 50u * 14u) * 4u);

  auto before = dir_bytes(pipe.config.paths.dataset_dir);

  // rerun, and rerun with 4 workers: identical bytes
  REQUIRE(cmd_generate(pipe.config) == 0);
  CHECK(dir_bytes(pipe.config.paths.dataset_dir) == before);
  RunConfig parallel = pipe.config;
  parallel.workers = 4;
  REQUIRE(cmd_generate(parallel) == 0);
  auto after = dir_bytes(pipe.config.paths.dataset_dir);
  // resolved_config.json records the worker count; everything else equal
  after.erase("resolved_config.json");
  before.erase("resolved_config.json");
  CHECK(after == before);

  // generate without a covariate cache: exit 2
  RunConfig missing = pipe.config;
  missing.paths.covariate_dir = (pipe.root / "nope").string();
  CHECK(cmd_generate(missing) == kExitInput);
}

TEST_CASE("full pipeline: train, evaluate, report, infer") {
  PipelineDirs pipe("full");
  REQUIRE(cmd_covariates(pipe.config) == 0);
  REQUIRE(cmd_generate(pipe.config) == 0);
  REQUIRE(cmd_train(pipe.config) == 0);

  auto history = slurp(fs::path(pipe.config.paths.checkpoint)
                           .parent_path() /
                       "history.csv");
  CHECK(count_occurrences(history, "\n") <=
        pipe.config.train.max_epochs + 1);
  CHECK(history.rfind("epoch,train_loss,val_loss,best_so_far", 0) == 0);

  // training replay is byte-identical
  auto ckpt_before = slurp(pipe.config.paths.checkpoint);
  auto hist_before = history;
  REQUIRE(cmd_train(pipe.config) == 0);
  CHECK(slurp(pipe.config.paths.checkpoint) == ckpt_before);
  CHECK(slurp(fs::path(pipe.config.paths.checkpoint).parent_path() /
              "history.csv") == hist_before);

  REQUIRE(cmd_evaluate(pipe.config) == 0);
  fs::path eval(pipe.config.paths.evaluate_dir);

  // metrics.csv: 13 parameter rows + overall; coverage within [0,1];
  // overall equals the mean of the 13 RMSE cells
  auto report = read_metrics_csv((eval / "metrics.csv").string());
  double mean_rmse = 0.0;
  for (const auto& pm : report.params) {
    CHECK(pm.coverage >= 0.0);
    CHECK(pm.coverage <= 1.0);
    mean_rmse += pm.rmse;
  }
  CHECK(std::abs(report.overall_rmse - mean_rmse / kNumCoefficients) < 1e-12);

  // rerunning evaluation is byte-identical
  auto eval_before = dir_bytes(eval);
  REQUIRE(cmd_evaluate(pipe.config) == 0);
  CHECK(dir_bytes(eval) == eval_before);

  REQUIRE(cmd_report(pipe.config) == 0);
  fs::path rep(pipe.config.paths.report_dir);
  int test_records = 0;
  {
    auto rows = read_predictions_csv((eval / "predictions.csv").string());
    std::set<int64_t> distinct;
    for (const auto& r : rows) distinct.insert(r.record);
    test_records = static_cast<int>(distinct.size());
  }
  REQUIRE(test_records > 0);
  for (int i = 0; i < kNumCoefficients; ++i) {
    auto cal = slurp(rep / ("calibration_" +
                            std::string(kCoefficientNames[i]) + ".svg"));
    CHECK(well_formed_xml(cal));
    CHECK(cal.find("stroke-dasharray") != std::string::npos);  // diagonal
    auto sc = slurp(rep / ("scatter_" + std::string(kCoefficientNames[i]) +
                           ".svg"));
    CHECK(well_formed_xml(sc));
    CHECK(count_occurrences(sc, "<circle") == test_records);
  }
  CHECK(well_formed_xml(slurp(rep / "distributions.svg")));

  // infer: build a raw-count trajectory from the first dataset record
  auto ds = load_dataset(pipe.config.paths.dataset_dir);
  auto raw = denormalize_features(ds.records[0].x, ds.manifest);
  auto traj_path = pipe.root / "traj.csv";
  {
    std::ofstream out(traj_path);
    out << "day";
    for (const auto& f : ds.manifest.feature_order) out << ',' << f;
    out << '\n';
    for (int d = 0; d < ds.manifest.horizon; ++d) {
      out << (d + 1);
      for (int c = 0; c < ds.manifest.d_in; ++c)
        out << ',' << format_double(raw[static_cast<size_t>(d) *
                                            ds.manifest.d_in +
                                        c]);
      out << '\n';
    }
  }
  auto posterior = pipe.root / "posterior.csv";
  REQUIRE(cmd_infer(pipe.config, traj_path.string(), posterior.string()) == 0);
  auto text = slurp(posterior);
  CHECK(text.find("# passes=8") == 0);
  CHECK(count_occurrences(text, "\n") == 2 + kNumCoefficients);

  // same seed -> identical output
  auto posterior2 = pipe.root / "posterior2.csv";
  REQUIRE(cmd_infer(pipe.config, traj_path.string(), posterior2.string()) ==
          0);
  CHECK(slurp(posterior2) == text);

  // dropout disabled via config: std columns all zero
  RunConfig no_dropout = pipe.config;
  no_dropout.uq.use_dropout = false;
  auto posterior3 = pipe.root / "posterior3.csv";
  REQUIRE(cmd_infer(no_dropout, traj_path.string(), posterior3.string()) ==
          0);
  std::ifstream in(posterior3);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto cells = split_csv_line(line);
    REQUIRE(cells.size() == 5);
    CHECK(cells[2] == "0");
    CHECK(cells[4] == "0");
  }

  // shape mismatch: trajectory with the wrong day count
  {
    std::ofstream out(traj_path, std::ios::app);
    out << "51";
    for (int c = 0; c < ds.manifest.d_in; ++c) out << ",0";
    out << '\n';
  }
  CHECK(cmd_infer(pipe.config, traj_path.string(),
                  (pipe.root / "bad.csv").string()) == kExitInput);
}

TEST_CASE("evaluate with an empty test split exits 2") {
  PipelineDirs pipe("notest");
  pipe.config.dataset.n = 6;
  pipe.config.dataset.split_fractions = {0.7, 0.3, 0.0};
  REQUIRE(cmd_covariates(pipe.config) == 0);
  REQUIRE(cmd_generate(pipe.config) == 0);
  REQUIRE(cmd_train(pipe.config) == 0);
  CHECK(cmd_evaluate(pipe.config) == kExitInput);
}

TEST_CASE("an existing lock file blocks the command") {
  PipelineDirs pipe("lock");
  fs::create_directories(pipe.config.paths.covariate_dir);
  {
    std::ofstream lock(fs::path(pipe.config.paths.covariate_dir) /
                       ".spn-lock");
  }
  CHECK(cmd_covariates(pipe.config) == kExitInput);
  fs::remove(fs::path(pipe.config.paths.covariate_dir) / ".spn-lock");
  CHECK(cmd_covariates(pipe.config) == 0);
}

TEST_CASE("config parsing: defaults, overrides, rejects") {
  auto c = run_config_from_json_text("{}");
  CHECK(c.master_seed == 42);
  CHECK(c.dataset.n == 256);
  CHECK(c.network.filters == 128);
  CHECK(c.uq.passes == 50);

  auto c2 = run_config_from_json_text(
      R"({"master_seed": 7, "dataset": {"n": 12, "dropout": {"p": 0.5, "mode": "cell"}},
          "model": {"incidence": "mass_action"}})");
  CHECK(c2.master_seed == 7);
  CHECK(c2.dataset.n == 12);
  CHECK(c2.dataset.dropout.mode == DropoutSpec::Mode::CellMask);
  CHECK(c2.model.incidence == IncidenceLaw::MassAction);

  CHECK_THROWS_AS((void)run_config_from_json_text("{nope"), ValidationError);
  CHECK_THROWS_AS(
      (void)run_config_from_json_text(R"({"dataset": {"dropout": {"p": 1.5}}})"),
      ValidationError);
  CHECK_THROWS_AS(
      (void)run_config_from_json_text(R"({"covariates": {"patches": 3}})"),
      ValidationError);

  // resolved form round-trips through the parser
  auto resolved = resolved_config_json(c2);
  auto c3 = run_config_from_json_text(resolved);
  CHECK(c3.master_seed == 7);
  CHECK(resolved_config_json(c3) == resolved);
}
