#include "robustkit/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "robustkit/error.hpp"

#ifndef ROBUSTKIT_VERSION
#define ROBUSTKIT_VERSION "dev"
#endif

namespace robustkit {

const char* version() { return ROBUSTKIT_VERSION; }

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& field, const std::string& text) {
  std::uint64_t v = 0;
  std::string t = trim(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(field, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& field, const std::string& text) {
  long long v = 0;
  std::string t = trim(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(field, "expected an integer, got '" + text + "'");
  }
  return static_cast<int>(v);
}

bool parse_bool(const std::string& field, const std::string& text) {
  std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(field, "expected true/false, got '" + text + "'");
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

DatasetKind parse_dataset(const std::string& text) {
  if (text == "two_gaussians") return DatasetKind::two_gaussians;
  if (text == "spirals") return DatasetKind::spirals;
  if (text == "idx") return DatasetKind::idx;
  throw ConfigError("dataset", "unknown dataset '" + text + "'");
}

std::string dataset_text(DatasetKind k) {
  switch (k) {
    case DatasetKind::two_gaussians: return "two_gaussians";
    case DatasetKind::spirals: return "spirals";
    case DatasetKind::idx: return "idx";
  }
  return "?";
}

template <typename T>
ConfigKey size_key(std::string name, std::string help, T RunConfig::*group, std::size_t T::*field) {
  return {name, std::move(help),
          [=](const RunConfig& c) { return std::to_string(c.*group.*field); },
          [=](RunConfig& c, const std::string& v) { c.*group.*field = parse_u64(name, v); }};
}

template <typename T>
ConfigKey double_key(std::string name, std::string help, T RunConfig::*group, double T::*field) {
  return {name, std::move(help),
          [=](const RunConfig& c) { return format_number(c.*group.*field); },
          [=](RunConfig& c, const std::string& v) { c.*group.*field = parse_number(name, v); }};
}

template <typename T>
ConfigKey seed_key(std::string name, std::string help, T RunConfig::*group, std::uint64_t T::*field) {
  return {name, std::move(help),
          [=](const RunConfig& c) { return std::to_string(c.*group.*field); },
          [=](RunConfig& c, const std::string& v) { c.*group.*field = parse_u64(name, v); }};
}

template <typename T>
ConfigKey path_key(std::string name, std::string help, T RunConfig::*group,
                   std::filesystem::path T::*field) {
  return {name, std::move(help),
          [=](const RunConfig& c) { return (c.*group.*field).string(); },
          [=](RunConfig& c, const std::string& v) { c.*group.*field = trim(v); }};
}

std::vector<ConfigKey> build_keys() {
  using R = RunConfig;
  std::vector<ConfigKey> k;
  // Dataset.
  k.push_back({"dataset", "two_gaussians | spirals | idx",
               [](const R& c) { return dataset_text(c.data.kind); },
               [](R& c, const std::string& v) { c.data.kind = parse_dataset(trim(v)); }});
  k.push_back(size_key("n", "training samples for synthetic data", &R::data, &DatasetSpec::n));
  k.push_back(size_key("n_test", "test samples for synthetic data", &R::data, &DatasetSpec::n_test));
  k.push_back(double_key("separation", "two_gaussians mean distance", &R::data, &DatasetSpec::separation));
  k.push_back(double_key("sigma", "two_gaussians noise", &R::data, &DatasetSpec::sigma));
  k.push_back(double_key("turns", "spiral turns", &R::data, &DatasetSpec::turns));
  k.push_back(double_key("noise", "spiral noise", &R::data, &DatasetSpec::noise));
  k.push_back(seed_key("data_seed", "dataset seed", &R::data, &DatasetSpec::seed));
  k.push_back(path_key("idx_images", "IDX training images", &R::data, &DatasetSpec::idx_images));
  k.push_back(path_key("idx_labels", "IDX training labels", &R::data, &DatasetSpec::idx_labels));
  k.push_back(path_key("idx_test_images", "IDX test images", &R::data, &DatasetSpec::idx_test_images));
  k.push_back(path_key("idx_test_labels", "IDX test labels", &R::data, &DatasetSpec::idx_test_labels));
  k.push_back(size_key("idx_limit", "IDX samples to load (0 = all)", &R::data, &DatasetSpec::idx_limit));
  // Model.
  k.push_back({"widths", "layer widths, e.g. 2,64,64,2",
               [](const R& c) {
                 std::vector<std::string> parts;
                 for (auto w : c.model.layer_widths) parts.push_back(std::to_string(w));
                 return join(parts);
               },
               [](R& c, const std::string& v) {
                 c.model.layer_widths.clear();
                 for (const auto& p : split_list(v)) c.model.layer_widths.push_back(parse_u64("widths", p));
               }});
  k.push_back(seed_key("init_seed", "parameter init seed", &R::model, &MlpConfig::init_seed));
  // Training.
  k.push_back({"epochs", "training epochs T", [](const R& c) { return std::to_string(c.plan.epochs); },
               [](R& c, const std::string& v) { c.plan.epochs = parse_int("epochs", v); }});
  k.push_back(size_key("batch_size", "batch size B", &R::plan, &TrainPlan::batch_size));
  k.push_back({"loss_mode", "clean | at | qub_static | qub_decreasing",
               [](const R& c) { return to_string(c.plan.loss_mode); },
               [](R& c, const std::string& v) { c.plan.loss_mode = parse_loss_mode(trim(v)); }});
  k.push_back(double_key("lr", "base learning rate", &R::plan, &TrainPlan::lr));
  k.push_back(double_key("momentum", "SGD momentum", &R::plan, &TrainPlan::momentum));
  k.push_back(double_key("weight_decay", "L2 weight decay", &R::plan, &TrainPlan::weight_decay));
  k.push_back({"lr_milestones", "epoch:factor list, e.g. 70:0.1,85:0.1 (empty for none)",
               [](const R& c) {
                 std::vector<std::string> parts;
                 for (auto m : c.plan.lr_milestones) parts.push_back(std::to_string(m.epoch) + ":" + format_number(m.factor));
                 return join(parts);
               },
               [](R& c, const std::string& v) {
                 c.plan.lr_milestones.clear();
                 std::string t = trim(v);
                 if (t == "none") return;
                 for (const auto& p : split_list(t)) {
                   auto colon = p.find(':');
                   if (colon == std::string::npos) throw ConfigError("lr_milestones", "expected epoch:factor, got '" + p + "'");
                   c.plan.lr_milestones.push_back({parse_int("lr_milestones", p.substr(0, colon)),
                                                   parse_number("lr_milestones", p.substr(colon + 1))});
                 }
               }});
  k.push_back({"early_stop", "none | best_pgd_val",
               [](const R& c) { return std::string(c.plan.early_stop.enabled ? "best_pgd_val" : "none"); },
               [](R& c, const std::string& v) {
                 std::string t = trim(v);
                 if (t == "none") c.plan.early_stop.enabled = false;
                 else if (t == "best_pgd_val") c.plan.early_stop.enabled = true;
                 else throw ConfigError("early_stop", "unknown early stop mode '" + t + "'");
               }});
  k.push_back({"early_stop_steps", "PGD steps for validation probing",
               [](const R& c) { return std::to_string(c.plan.early_stop.pgd_steps); },
               [](R& c, const std::string& v) { c.plan.early_stop.pgd_steps = parse_int("early_stop_steps", v); }});
  k.push_back({"early_stop_every", "probe every n epochs",
               [](const R& c) { return std::to_string(c.plan.early_stop.every_n_epochs); },
               [](R& c, const std::string& v) { c.plan.early_stop.every_n_epochs = parse_int("early_stop_every", v); }});
  k.push_back(seed_key("seed", "training seed (shuffling, attacks)", &R::plan, &TrainPlan::seed));
  k.push_back(double_key("val_fraction", "held-out validation share", &R::plan, &TrainPlan::val_fraction));
  k.push_back({"record_wall_time", "write measured epoch times (false writes 0)",
               [](const R& c) { return bool_text(c.plan.record_wall_time); },
               [](R& c, const std::string& v) { c.plan.record_wall_time = parse_bool("record_wall_time", v); }});
  // Attack.
  k.push_back({"attack", "fgsm | fgsm_rs | n_fgsm | pgd",
               [](const R& c) { return to_string(c.plan.attack.family); },
               [](R& c, const std::string& v) { c.plan.attack.family = parse_attack_family(trim(v)); }});
  k.push_back({"epsilon", "L-infinity budget", [](const R& c) { return format_number(c.plan.attack.epsilon); },
               [](R& c, const std::string& v) { c.plan.attack.epsilon = parse_number("epsilon", v); }});
  k.push_back({"alpha", "step size (auto = family default)",
               [](const R& c) { return c.plan.attack.alpha ? format_number(*c.plan.attack.alpha) : std::string("auto"); },
               [](R& c, const std::string& v) {
                 if (trim(v) == "auto") c.plan.attack.alpha.reset();
                 else c.plan.attack.alpha = parse_number("alpha", v);
               }});
  k.push_back({"attack_steps", "PGD steps", [](const R& c) { return std::to_string(c.plan.attack.steps); },
               [](R& c, const std::string& v) { c.plan.attack.steps = parse_int("attack_steps", v); }});
  k.push_back({"restarts", "PGD restarts", [](const R& c) { return std::to_string(c.plan.attack.restarts); },
               [](R& c, const std::string& v) { c.plan.attack.restarts = parse_int("restarts", v); }});
  k.push_back({"noise_scale", "N-FGSM noise multiple of epsilon",
               [](const R& c) { return format_number(c.plan.attack.noise_scale); },
               [](R& c, const std::string& v) { c.plan.attack.noise_scale = parse_number("noise_scale", v); }});
  k.push_back({"clip", "input box lo,hi or none",
               [](const R& c) {
                 const auto& b = c.plan.attack.clip_input;
                 return b ? format_number(b->lo) + "," + format_number(b->hi) : std::string("none");
               },
               [](R& c, const std::string& v) {
                 std::string t = trim(v);
                 if (t == "none") {
                   c.plan.attack.clip_input.reset();
                   return;
                 }
                 auto parts = split_list(t);
                 if (parts.size() != 2) throw ConfigError("clip", "expected lo,hi or none");
                 c.plan.attack.clip_input = FeatureBox{parse_number("clip", parts[0]), parse_number("clip", parts[1])};
               }});
  k.push_back({"random_start", "PGD random start",
               [](const R& c) { return bool_text(c.plan.attack.random_start); },
               [](R& c, const std::string& v) { c.plan.attack.random_start = parse_bool("random_start", v); }});
  k.push_back({"attack_seed", "attack seed", [](const R& c) { return std::to_string(c.plan.attack.seed); },
               [](R& c, const std::string& v) { c.plan.attack.seed = parse_u64("attack_seed", v); }});
  // Evaluation.
  k.push_back({"eval_attacks", "presets: pgd10, pgd20, pgd50-10, fgsm",
               [](const R& c) { return join(c.eval_attacks); },
               [](R& c, const std::string& v) { c.eval_attacks = split_list(v); }});
  // Analysis.
  k.push_back(size_key("resolution", "landscape grid resolution", &R::analysis, &AnalysisSettings::resolution));
  k.push_back(size_key("landscape_index", "test sample for the landscape", &R::analysis, &AnalysisSettings::landscape_index));
  k.push_back(double_key("landscape_eps", "landscape extent (0 = epsilon)", &R::analysis, &AnalysisSettings::landscape_eps));
  k.push_back(size_key("eigen_samples", "samples for the eigenvalue mean", &R::analysis, &AnalysisSettings::eigen_samples));
  k.push_back({"eigen_max_iters", "power iteration cap",
               [](const R& c) { return std::to_string(c.analysis.power.max_iters); },
               [](R& c, const std::string& v) { c.analysis.power.max_iters = parse_int("eigen_max_iters", v); }});
  k.push_back({"eigen_tol", "power iteration residual tolerance",
               [](const R& c) { return format_number(c.analysis.power.tol); },
               [](R& c, const std::string& v) { c.analysis.power.tol = parse_number("eigen_tol", v); }});
  k.push_back({"fd_step", "finite-difference step for Hessian-vector products",
               [](const R& c) { return format_number(c.analysis.power.fd_step); },
               [](R& c, const std::string& v) { c.analysis.power.fd_step = parse_number("fd_step", v); }});
  k.push_back({"sparsity_eps", "budgets for the sparsity sweep",
               [](const R& c) {
                 std::vector<std::string> parts;
                 for (double e : c.analysis.sparsity_eps) parts.push_back(format_number(e));
                 return join(parts);
               },
               [](R& c, const std::string& v) {
                 c.analysis.sparsity_eps.clear();
                 for (const auto& p : split_list(v)) c.analysis.sparsity_eps.push_back(parse_number("sparsity_eps", p));
               }});
  k.push_back({"sparsity_directions", "rays per sample",
               [](const R& c) { return std::to_string(c.analysis.sparsity.directions); },
               [](R& c, const std::string& v) { c.analysis.sparsity.directions = parse_u64("sparsity_directions", v); }});
  k.push_back({"line_search_iters", "bisection steps per ray",
               [](const R& c) { return std::to_string(c.analysis.sparsity.line_search_iters); },
               [](R& c, const std::string& v) { c.analysis.sparsity.line_search_iters = parse_int("line_search_iters", v); }});
  k.push_back({"sparsity_samples", "test samples for sparsity (0 = all)",
               [](const R& c) { return std::to_string(c.analysis.sparsity.max_samples); },
               [](R& c, const std::string& v) { c.analysis.sparsity.max_samples = parse_u64("sparsity_samples", v); }});
  k.push_back(seed_key("analysis_seed", "seed for diagnostics", &R::analysis, &AnalysisSettings::seed));
  // Output.
  k.push_back({"out", "output directory", [](const R& c) { return c.out_dir.string(); },
               [](R& c, const std::string& v) { c.out_dir = trim(v); }});
  k.push_back({"checkpoint", "checkpoint to read (eval/analyze)", [](const R& c) { return c.checkpoint.string(); },
               [](R& c, const std::string& v) { c.checkpoint = trim(v); }});
  return k;
}

}  // namespace

double parse_number(const std::string& field, const std::string& text) {
  std::string t = trim(text);
  auto parse_plain = [&](const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(field, "expected a number, got '" + text + "'");
    }
    return v;
  };
  auto slash = t.find('/');
  if (slash == std::string::npos) return parse_plain(t);
  double num = parse_plain(trim(t.substr(0, slash)));
  double den = parse_plain(trim(t.substr(slash + 1)));
  if (den == 0.0) throw ConfigError(field, "division by zero in '" + text + "'");
  return num / den;
}

std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == key) {
      k.set(*this, value);
      return;
    }
  }
  throw ConfigError(key, "unknown configuration key");
}

std::string RunConfig::get(const std::string& key) const {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == key) return k.get(*this);
  }
  throw ConfigError(key, "unknown configuration key");
}

void RunConfig::validate() const {
  if (data.kind == DatasetKind::idx) {
    if (data.idx_images.empty()) throw ConfigError("idx_images", "required for dataset = idx");
    if (data.idx_labels.empty()) throw ConfigError("idx_labels", "required for dataset = idx");
  } else {
    if (data.n == 0 || data.n % 2 != 0) throw ConfigError("n", "must be positive and even");
    if (data.n_test == 0 || data.n_test % 2 != 0) throw ConfigError("n_test", "must be positive and even");
  }
  model.validate();
  plan.validate();
  if (analysis.resolution < 2) throw ConfigError("resolution", "must be >= 2");
  if (analysis.eigen_samples < 1) throw ConfigError("eigen_samples", "must be >= 1");
  if (analysis.power.max_iters < 1) throw ConfigError("eigen_max_iters", "must be >= 1");
  if (!(analysis.power.tol > 0.0)) throw ConfigError("eigen_tol", "must be > 0");
  if (!(analysis.power.fd_step > 0.0)) throw ConfigError("fd_step", "must be > 0");
  if (analysis.sparsity_eps.empty()) throw ConfigError("sparsity_eps", "needs at least one budget");
  for (double e : analysis.sparsity_eps) {
    if (!(e > 0.0)) throw ConfigError("sparsity_eps", "budgets must be > 0");
  }
  if (analysis.sparsity.directions < 1) throw ConfigError("sparsity_directions", "must be >= 1");
  if (analysis.sparsity.line_search_iters < 0) throw ConfigError("line_search_iters", "must be >= 0");
  if (!(analysis.landscape_eps >= 0.0)) throw ConfigError("landscape_eps", "must be >= 0");
  AttackSpec probe = plan.attack;
  for (const auto& name : eval_attacks) resolve_attack_preset(name, probe).validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "# robustkit " << version() << " effective configuration\n";
  for (const ConfigKey& k : config_keys()) os << k.name << " = \"" << k.get(*this) << "\"\n";
  return os.str();
}

analysis::ConfigEcho RunConfig::echo() const {
  analysis::ConfigEcho out;
  out.emplace_back("version", version());
  for (const ConfigKey& k : config_keys()) out.emplace_back(k.name, k.get(*this));
  return out;
}

}  // namespace robustkit
