#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "robustkit/config.hpp"
#include "robustkit/error.hpp"
#include "robustkit/harness.hpp"
#include "robustkit/loss.hpp"
#include "robustkit/model.hpp"
#include "robustkit/pipeline.hpp"
#include "robustkit/verify.hpp"

namespace robustkit::cli {

namespace {

namespace fs = std::filesystem;

std::string quoted(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

void diagnose(std::ostream& err, const std::string& kind, const std::string& field, const std::string& message) {
  err << "robustkit: error=" << kind << " field=" << (field.empty() ? "-" : field)
      << " message=" << quoted(message) << '\n';
}

const char* error_kind(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const TruncatedFileError*>(&e)) return "truncated";
  if (dynamic_cast<const ShapeTableError*>(&e)) return "shape_table";
  if (dynamic_cast<const ChecksumError*>(&e)) return "checksum";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  return "runtime";
}

// One string slot per configuration key; std::map keeps the addresses stable
// while CLI11 holds pointers into it.
struct KeyOptions {
  std::map<std::string, std::string> slots;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
};

void add_key_options(CLI::App& app, KeyOptions& keys) {
  app.add_option("--config", keys.config_path, "Configuration file (key = value lines)")
      ->required()
      ->check(CLI::ExistingFile);
  for (const ConfigKey& k : config_keys()) {
    CLI::Option* opt = app.add_option("--" + k.name, keys.slots[k.name], k.help)
                           ->multi_option_policy(CLI::MultiOptionPolicy::Join)
                           ->delimiter(',')
                           ->group("Configuration overrides");
    keys.options[k.name] = opt;
  }
}

// File values first, then command-line overrides.
RunConfig collect_config(const KeyOptions& keys) {
  RunConfig cfg;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(keys.config_path);
  } catch (const CLI::ParseError& e) {
    throw ConfigError("config", e.what());
  }
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    std::string name = item.fullname();
    if (!keys.options.count(name)) throw ConfigError(name, "unknown configuration key");
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    cfg.set(name, value);
  }
  for (const ConfigKey& k : config_keys()) {
    if (keys.options.at(k.name)->count() > 0) cfg.set(k.name, keys.slots.at(k.name));
  }
  cfg.validate();
  return cfg;
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out_dir / "checkpoint.rkpt" : cfg.checkpoint;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  write_effective_config(cfg.out_dir, cfg);
  DataSplits data = make_datasets(cfg.data);
  TrainResult result = run_train(cfg, data);
  fs::path ckpt = cfg.out_dir / "checkpoint.rkpt";
  save_checkpoint(result.model, ckpt);
  std::ostringstream jsonl;
  write_jsonl(jsonl, result.records);
  write_text_file(cfg.out_dir / "epochs.jsonl", jsonl.str());
  const EpochRecord& last = result.records.back();
  out << "trained " << result.records.size() << " epochs (" << to_string(cfg.plan.loss_mode)
      << "), selected epoch " << result.selected_epoch << ", final train loss " << last.mean_train_loss
      << "\ncheckpoint: " << ckpt.string() << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  Mlp model = load_checkpoint(checkpoint_path(cfg));
  write_effective_config(cfg.out_dir, cfg);
  DataSplits data = make_datasets(cfg.data);
  EvalReport report = run_eval(cfg, model, data.test);
  std::ostringstream json;
  write_eval_json(json, report, cfg.echo());
  write_text_file(cfg.out_dir / "eval.json", json.str());
  out << "SA " << report.standard_accuracy;
  for (const auto& [name, ra] : report.robust_accuracy) out << "  RA(" << name << ") " << ra;
  out << "\nreport: " << (cfg.out_dir / "eval.json").string() << '\n';
  return kOk;
}

int cmd_analyze(const RunConfig& cfg, const std::string& which, std::ostream& out) {
  Mlp model = load_checkpoint(checkpoint_path(cfg));
  write_effective_config(cfg.out_dir, cfg);
  Dataset test = make_datasets(cfg.data).test;
  bool all = which == "all";
  if (all || which == "landscape") {
    auto grid = run_landscape(cfg, model, test);
    std::ostringstream csv;
    analysis::write_landscape_csv(csv, grid);
    write_text_file(cfg.out_dir / "landscape.csv", csv.str());
    out << "landscape " << grid.resolution << "x" << grid.resolution << " origin loss " << grid.value(0, 0)
        << (grid.zero_gradient ? " (zero gradient: d_g is all zeros)" : "") << '\n';
  }
  if (all || which == "eigen") {
    auto report = run_eigen(cfg, model, test);
    std::ostringstream json;
    analysis::write_eigen_json(json, report, cfg.echo());
    write_text_file(cfg.out_dir / "eigen.json", json.str());
    out << "eigen mean " << report.mean << " over " << report.n_converged << "/" << report.estimates.size()
        << " converged samples\n";
  }
  if (all || which == "sparsity") {
    auto reports = run_sparsity(cfg, model, test);
    std::ostringstream json;
    analysis::write_sparsity_json(json, reports, cfg.echo());
    write_text_file(cfg.out_dir / "sparsity.json", json.str());
    for (const auto& r : reports) {
      out << "sparsity eps " << r.eps << " mean " << r.mean << " (attackable " << r.n_attackable
          << ", unattackable " << r.n_unattackable << ")\n";
    }
  }
  return kOk;
}

int cmd_verify(std::uint64_t seed, double coefficient, std::ostream& out, std::ostream& err) {
  verify::VerifyOptions opts;
  opts.seed = seed;
  opts.qub_coefficient = coefficient;
  auto results = verify::run_property_suite(opts);
  const verify::PropertyResult* first_failure = nullptr;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " checks=" << r.checks << " " << r.detail;
    if (!r.passed) out << " counterexample: " << r.counterexample;
    out << '\n';
    if (!r.passed && !first_failure) first_failure = &r;
  }
  if (first_failure) {
    diagnose(err, "verify", first_failure->name, first_failure->counterexample);
    return kVerifyFailed;
  }
  return kOk;
}

template <typename Body>
int guarded(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            Body body) {
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    diagnose(err, "usage", "", e.what());
    return kConfigError;
  }
  try {
    return body();
  } catch (const ConfigError& e) {
    diagnose(err, "config", e.field(), e.what());
    return kConfigError;
  } catch (const Error& e) {
    diagnose(err, error_kind(e), "", e.what());
    return kRuntimeError;
  } catch (const std::exception& e) {
    diagnose(err, "runtime", "", e.what());
    return kRuntimeError;
  }
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"robustkit: adversarial training with the quadratic upper bound loss", "robustkit"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  KeyOptions train_keys, eval_keys, analyze_keys;
  CLI::App* train = app.add_subcommand("train", "Train a model; writes checkpoint.rkpt and epochs.jsonl");
  add_key_options(*train, train_keys);
  CLI::App* eval = app.add_subcommand("eval", "Standard and robust accuracy of a checkpoint; writes eval.json");
  add_key_options(*eval, eval_keys);
  CLI::App* analyze = app.add_subcommand("analyze", "Landscape, eigenvalue or sparsity diagnostics");
  add_key_options(*analyze, analyze_keys);
  std::string which;
  analyze->add_option("which", which, "landscape | eigen | sparsity | all")
      ->required()
      ->check(CLI::IsMember({"landscape", "eigen", "sparsity", "all"}));
  CLI::App* verify = app.add_subcommand("verify", "Randomized property checks of the loss machinery");
  std::uint64_t verify_seed = verify::VerifyOptions{}.seed;
  double coefficient = loss::kQuadraticCoefficient;
  verify->add_option("--seed", verify_seed, "Seed for the property suite");
  verify->add_option("--qub-coefficient", coefficient, "Quadratic coefficient used by the bound check")
      ->group("");

  return guarded(app, args, out, err, [&]() -> int {
    if (train->parsed()) return cmd_train(collect_config(train_keys), out);
    if (eval->parsed()) return cmd_eval(collect_config(eval_keys), out);
    if (analyze->parsed()) return cmd_analyze(collect_config(analyze_keys), which, out);
    return cmd_verify(verify_seed, coefficient, out, err);
  });
}

int run_compare(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"robustkit-compare: method-versus-method matrix over seeds", "robustkit-compare"};
  KeyOptions keys;
  add_key_options(app, keys);
  std::string methods_text = "at+pgd,qub_static+pgd,qub_decreasing+pgd";
  std::string seeds_text = "0,1,2";
  std::string sweep_text;
  std::string preset = "pgd20";
  bool no_eigen = false, no_sparsity = false;
  app.add_option("--methods", methods_text, "Comma list of loss_mode+attack pairs")->capture_default_str();
  app.add_option("--seeds", seeds_text, "Comma list of seeds")->capture_default_str();
  app.add_option("--ra-preset", preset, "Attack preset for robust accuracy")->capture_default_str();
  app.add_option("--ra-sweep", sweep_text, "Comma list of budgets for an RA sweep (off when empty)");
  app.add_flag("--no-eigen", no_eigen, "Skip the eigenvalue diagnostic");
  app.add_flag("--no-sparsity", no_sparsity, "Skip the sparsity diagnostic");

  return guarded(app, args, out, err, [&]() -> int {
    RunConfig base = collect_config(keys);
    std::vector<Method> methods;
    for (const auto& m : split_commas(methods_text)) methods.push_back(parse_method(m, base.plan.attack.family));
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_commas(seeds_text)) seeds.push_back(static_cast<std::uint64_t>(parse_number("seeds", s)));
    MatrixOptions opts;
    opts.ra_preset = preset;
    opts.eigen = !no_eigen;
    opts.sparsity = !no_sparsity;
    for (const auto& e : split_commas(sweep_text)) opts.ra_sweep_eps.push_back(parse_number("ra-sweep", e));
    opts.on_cell = [&](const CellResult& c) {
      out << c.method.label() << " seed " << c.seed
          << (c.failed ? " FAILED: " + c.error : " SA " + format_number(c.standard_accuracy) + " RA " +
                                                     format_number(c.robust_accuracy))
          << '\n';
    };
    ComparisonMatrix matrix = run_matrix(base, methods, seeds, opts);
    write_matrix(base.out_dir, matrix, base);
    out << "matrix written to " << base.out_dir.string() << '\n';
    bool any_failed = std::any_of(matrix.cells.begin(), matrix.cells.end(), [](const auto& c) { return c.failed; });
    return any_failed ? kRuntimeError : kOk;
  });
}

}  // namespace robustkit::cli
