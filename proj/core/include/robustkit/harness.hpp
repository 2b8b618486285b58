#pragma once

// Method-versus-method comparison over seeds: trains and evaluates every
// (method, seed) cell through the pipeline API and tabulates the results.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "robustkit/attack.hpp"
#include "robustkit/config.hpp"
#include "robustkit/train.hpp"

namespace robustkit {

struct Method {
  LossMode loss_mode = LossMode::at;
  AttackFamily family = AttackFamily::pgd;

  std::string label() const;  // e.g. "qub_static+pgd"
};

// Parses "loss_mode+family"; a bare loss mode keeps the base attack family.
Method parse_method(const std::string& text, AttackFamily fallback = AttackFamily::pgd);

struct CellResult {
  Method method;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::string config_hash;  // CRC32 of the cell's effective config text
  double standard_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double eigen_mean = 0.0;
  std::vector<double> sparsity_means;  // one per sparsity budget
  std::vector<double> ra_sweep;        // one per sweep budget, if enabled
  double final_lambda = 0.0;
  double wall_seconds = 0.0;  // training time only
};

struct MatrixOptions {
  std::string ra_preset = "pgd20";
  bool eigen = true;
  bool sparsity = true;
  std::vector<double> ra_sweep_eps;  // empty disables the epsilon sweep
  std::size_t workers = 0;           // 0 = worker_count()
  std::function<void(const CellResult&)> on_cell;
};

struct SeedSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

SeedSummary summarize(const std::vector<double>& values);

struct ComparisonMatrix {
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<double> sparsity_eps;
  std::vector<double> ra_sweep_eps;
  std::vector<CellResult> cells;  // method-major

  const CellResult& cell(std::size_t method, std::size_t seed) const;
  // Values of one metric for a method across seeds, failed cells skipped.
  std::vector<double> metric(std::size_t method, const std::function<double(const CellResult&)>& get) const;
  SeedSummary summary(std::size_t method, const std::function<double(const CellResult&)>& get) const;
  std::size_t method_index(LossMode mode) const;
};

RunConfig cell_config(const RunConfig& base, const Method& method, std::uint64_t seed);
std::string config_hash(const RunConfig& config);

ComparisonMatrix run_matrix(const RunConfig& base, const std::vector<Method>& methods,
                            const std::vector<std::uint64_t>& seeds, const MatrixOptions& options = {});

// comparison_SA.csv, comparison_RA.csv, comparison_eigen.csv,
// comparison_sparsity.csv, comparison_time.csv, optional comparison_RA_sweep.csv
// and bundle.json.
void write_matrix(const std::filesystem::path& dir, const ComparisonMatrix& matrix, const RunConfig& base);

}  // namespace robustkit
