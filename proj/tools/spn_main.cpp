#include <CLI11.hpp>
#include <cstdio>

#include "spn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free parameter recovery for a two-patch "
               "vector-host stochastic Petri net"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "Pipeline config (JSON)")
      ->required();
  uint64_t seed_override = 0;
  auto* seed_opt =
      app.add_option("--seed", seed_override, "Override the master seed");
  int workers_override = 0;
  auto* workers_opt = app.add_option("--workers", workers_override,
                                     "Worker threads for generation");

  auto* covariates = app.add_subcommand(
      "covariates", "Preprocess weather data and evaluate basis functions");
  auto* generate = app.add_subcommand(
      "generate", "Simulate the net and build the training dataset");
  auto* train_cmd =
      app.add_subcommand("train", "Train the regression network");
  auto* infer = app.add_subcommand(
      "infer", "Posterior mean/std for one trajectory file");
  std::string input_csv, output_csv = "posterior.csv";
  infer->add_option("--input", input_csv, "Trajectory CSV (raw counts)")
      ->required();
  infer->add_option("--output", output_csv, "Output CSV path");
  auto* evaluate = app.add_subcommand(
      "evaluate", "Metrics and calibration on the test split");
  auto* report =
      app.add_subcommand("report", "Render SVG plots from evaluation output");

  CLI11_PARSE(app, argc, argv);

  spn::RunConfig config;
  try {
    config = spn::load_run_config(config_path);
    if (*seed_opt) config.master_seed = seed_override;
    if (*workers_opt) {
      if (workers_override < 1) throw spn::ValidationError("workers must be >= 1");
      config.workers = workers_override;
    }
  } catch (const std::exception& e) {
    fprintf(stderr, "spn: error: %s\n", e.what());
    return spn::exit_code_for(e);
  }

  if (covariates->parsed()) return spn::cmd_covariates(config);
  if (generate->parsed()) return spn::cmd_generate(config);
  if (train_cmd->parsed()) return spn::cmd_train(config);
  if (infer->parsed()) return spn::cmd_infer(config, input_csv, output_csv);
  if (evaluate->parsed()) return spn::cmd_evaluate(config);
  if (report->parsed()) return spn::cmd_report(config);
  return spn::kExitInput;
}
