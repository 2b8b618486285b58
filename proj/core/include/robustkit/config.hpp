#pragma once

// Everything a run needs, reachable by flat string keys. The same keys are
// used by config files, command-line overrides and the effective-config echo.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "robustkit/analysis.hpp"
#include "robustkit/model.hpp"
#include "robustkit/train.hpp"

namespace robustkit {

const char* version();

enum class DatasetKind { two_gaussians, spirals, idx };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::spirals;
  std::size_t n = 2000;
  std::size_t n_test = 1000;
  double separation = 4.0;
  double sigma = 1.0;
  double turns = 1.0;
  double noise = 0.03;
  std::uint64_t seed = 0;
  std::filesystem::path idx_images;
  std::filesystem::path idx_labels;
  std::filesystem::path idx_test_images;
  std::filesystem::path idx_test_labels;
  std::size_t idx_limit = 0;
};

struct AnalysisSettings {
  std::size_t resolution = 50;
  std::size_t landscape_index = 0;
  // 0 means "use the attack epsilon".
  double landscape_eps = 0.0;
  std::size_t eigen_samples = 1000;
  analysis::PowerIterationOptions power;
  std::vector<double> sparsity_eps{4.0 / 255.0, 8.0 / 255.0, 12.0 / 255.0, 16.0 / 255.0};
  analysis::SparsityOptions sparsity;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DatasetSpec data;
  MlpConfig model{{2, 64, 64, 2}, Activation::relu, 0};
  TrainPlan plan;
  AnalysisSettings analysis;
  std::vector<std::string> eval_attacks{"pgd10", "pgd20", "pgd50-10"};
  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;

  // Throws ConfigError naming the first offending key.
  void validate() const;
  // key = value lines in registry order, preceded by a version comment.
  std::string to_text() const;
  analysis::ConfigEcho echo() const;
  // Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_keys();

// Parses "0.5", "8/255", "1e-3". Throws ConfigError(field) on failure.
double parse_number(const std::string& field, const std::string& text);
std::string format_number(double v);

}  // namespace robustkit
