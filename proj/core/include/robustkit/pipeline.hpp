#pragma once

// End-to-end drivers behind the train / eval / analyze commands. The harness
// uses the same functions so CLI runs and matrix cells agree exactly.

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "robustkit/analysis.hpp"
#include "robustkit/config.hpp"
#include "robustkit/data.hpp"
#include "robustkit/model.hpp"
#include "robustkit/train.hpp"

namespace robustkit {

struct DataSplits {
  Dataset train;
  Dataset test;
};

// Synthetic test sets come from data_seed + 1; IDX runs use the test files
// when given, otherwise a deterministic 90/10 split of the training files.
DataSplits make_datasets(const DatasetSpec& spec);

// Applies the dataset's feature box to the attack unless one was configured.
TrainPlan effective_plan(const RunConfig& config, const Dataset& train);

TrainResult run_train(const RunConfig& config, const DataSplits& data);

struct EvalReport {
  std::size_t n = 0;
  double standard_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> robust_accuracy;  // preset -> RA
};

EvalReport run_eval(const RunConfig& config, const Mlp& model, const Dataset& test);
void write_eval_json(std::ostream& out, const EvalReport& report, const analysis::ConfigEcho& config);

analysis::LandscapeGrid run_landscape(const RunConfig& config, const Mlp& model, const Dataset& test);
analysis::EigenReport run_eigen(const RunConfig& config, const Mlp& model, const Dataset& test);
std::vector<analysis::SparsityReport> run_sparsity(const RunConfig& config, const Mlp& model,
                                                   const Dataset& test);

// File helpers: all artifacts are written through these so that each output
// directory carries effective_config.ini.
void write_effective_config(const std::filesystem::path& dir, const RunConfig& config);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace robustkit
