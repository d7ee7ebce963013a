#pragma once

#include <string>

#include "spn/config.hpp"
#include "spn/report.hpp"

namespace spn {

// Exit codes: 0 success, 2 input/validation, 3 generation failure rate,
// 4 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitGeneration = 3;
inline constexpr int kExitNumeric = 4;

int cmd_covariates(const RunConfig& config);
int cmd_generate(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_infer(const RunConfig& config, const std::string& trajectory_csv,
              const std::string& output_csv);
int cmd_evaluate(const RunConfig& config);
int cmd_report(const RunConfig& config);

// Maps an exception thrown by the pipeline to the exit-code contract.
int exit_code_for(const std::exception& e);

}  // namespace spn
