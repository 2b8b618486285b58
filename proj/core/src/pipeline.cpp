#include "robustkit/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "robustkit/attack.hpp"
#include "robustkit/error.hpp"
#include "robustkit/random.hpp"

namespace robustkit {

DataSplits make_datasets(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::two_gaussians:
      return {gen_two_gaussians(spec.n, spec.separation, spec.sigma, spec.seed),
              gen_two_gaussians(spec.n_test, spec.separation, spec.sigma, spec.seed + 1)};
    case DatasetKind::spirals:
      return {gen_spirals(spec.n, spec.turns, spec.noise, spec.seed),
              gen_spirals(spec.n_test, spec.turns, spec.noise, spec.seed + 1)};
    case DatasetKind::idx: {
      Dataset all = load_idx(spec.idx_images, spec.idx_labels, spec.idx_limit);
      if (!spec.idx_test_images.empty() && !spec.idx_test_labels.empty()) {
        Dataset test = load_idx(spec.idx_test_images, spec.idx_test_labels, spec.idx_limit);
        if (test.dim() != all.dim()) {
          throw DimensionError("IDX test images have " + std::to_string(test.dim()) +
                               " features, training images " + std::to_string(all.dim()));
        }
        test.num_classes = all.num_classes = std::max(all.num_classes, test.num_classes);
        return {std::move(all), std::move(test)};
      }
      auto [train, test] = split(all, SplitSpec{0.9, spec.seed});
      return {std::move(train), std::move(test)};
    }
  }
  throw ContractError("make_datasets: unknown dataset kind");
}

TrainPlan effective_plan(const RunConfig& config, const Dataset& train) {
  TrainPlan plan = config.plan;
  if (!plan.attack.clip_input && train.feature_box) plan.attack.clip_input = train.feature_box;
  return plan;
}

namespace {

void check_model_fits(const Mlp& model, const Dataset& data) {
  const auto& w = model.config().layer_widths;
  if (w.front() != data.dim()) {
    throw DimensionError("model expects " + std::to_string(w.front()) + " input features, data has " +
                         std::to_string(data.dim()));
  }
  if (w.back() < data.num_classes) {
    throw DimensionError("model has " + std::to_string(w.back()) + " outputs, data has " +
                         std::to_string(data.num_classes) + " classes");
  }
}

AttackSpec eval_base(const RunConfig& config, const Dataset& data) {
  AttackSpec base = config.plan.attack;
  if (!base.clip_input && data.feature_box) base.clip_input = data.feature_box;
  base.seed = derive_seed(config.plan.seed, 0xe7a1);
  return base;
}

}  // namespace

TrainResult run_train(const RunConfig& config, const DataSplits& data) {
  Mlp model(config.model);
  check_model_fits(model, data.train);
  return train(std::move(model), data.train, effective_plan(config, data.train));
}

EvalReport run_eval(const RunConfig& config, const Mlp& model, const Dataset& test) {
  check_model_fits(model, test);
  EvalReport report;
  report.n = test.size();
  report.standard_accuracy = accuracy(model, test);
  AttackSpec base = eval_base(config, test);
  for (const std::string& name : config.eval_attacks) {
    AttackSpec spec = resolve_attack_preset(name, base);
    report.robust_accuracy.emplace_back(name, evaluate_robust_accuracy(model, test, spec));
  }
  return report;
}

void write_eval_json(std::ostream& out, const EvalReport& report, const analysis::ConfigEcho& config) {
  nlohmann::ordered_json j;
  j["n"] = report.n;
  j["standard_accuracy"] = report.standard_accuracy;
  nlohmann::ordered_json ra = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.robust_accuracy) ra[name] = value;
  j["robust_accuracy"] = ra;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  out << j.dump(2) << '\n';
}

analysis::LandscapeGrid run_landscape(const RunConfig& config, const Mlp& model, const Dataset& test) {
  check_model_fits(model, test);
  std::size_t i = config.analysis.landscape_index;
  if (i >= test.size()) {
    throw ConfigError("landscape_index", "sample " + std::to_string(i) + " outside test set of size " +
                                             std::to_string(test.size()));
  }
  double eps = config.analysis.landscape_eps > 0.0 ? config.analysis.landscape_eps : config.plan.attack.epsilon;
  if (!(eps > 0.0)) throw ConfigError("landscape_eps", "landscape needs a positive extent");
  return analysis::landscape(model, test.sample(i), test.y[i], eps, config.analysis.resolution,
                             config.analysis.seed);
}

analysis::EigenReport run_eigen(const RunConfig& config, const Mlp& model, const Dataset& test) {
  check_model_fits(model, test);
  analysis::PowerIterationOptions opts = config.analysis.power;
  opts.seed = config.analysis.seed;
  std::size_t n = std::min(config.analysis.eigen_samples, test.size());
  return analysis::mean_dominant_eigenvalue(model, test, n, opts);
}

std::vector<analysis::SparsityReport> run_sparsity(const RunConfig& config, const Mlp& model,
                                                   const Dataset& test) {
  check_model_fits(model, test);
  analysis::SparsityOptions opts = config.analysis.sparsity;
  opts.seed = config.analysis.seed;
  return analysis::sparsity_sweep(model, test, config.analysis.sparsity_eps, opts);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void write_effective_config(const std::filesystem::path& dir, const RunConfig& config) {
  write_text_file(dir / "effective_config.ini", config.to_text());
}

}  // namespace robustkit
