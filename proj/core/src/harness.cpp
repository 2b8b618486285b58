#include "robustkit/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "robustkit/error.hpp"
#include "robustkit/parallel.hpp"
#include "robustkit/pipeline.hpp"

namespace robustkit {

std::string Method::label() const { return to_string(loss_mode) + "+" + to_string(family); }

Method parse_method(const std::string& text, AttackFamily fallback) {
  auto plus = text.find('+');
  if (plus == std::string::npos) return {parse_loss_mode(text), fallback};
  return {parse_loss_mode(text.substr(0, plus)), parse_attack_family(text.substr(plus + 1))};
}

SeedSummary summarize(const std::vector<double>& values) {
  SeedSummary s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.stddev = std::nan("");
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

const CellResult& ComparisonMatrix::cell(std::size_t method, std::size_t seed) const {
  return cells.at(method * seeds.size() + seed);
}

std::vector<double> ComparisonMatrix::metric(std::size_t method,
                                             const std::function<double(const CellResult&)>& get) const {
  std::vector<double> out;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const CellResult& c = cell(method, s);
    if (!c.failed) out.push_back(get(c));
  }
  return out;
}

SeedSummary ComparisonMatrix::summary(std::size_t method,
                                      const std::function<double(const CellResult&)>& get) const {
  return summarize(metric(method, get));
}

std::size_t ComparisonMatrix::method_index(LossMode mode) const {
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (methods[i].loss_mode == mode) return i;
  }
  throw ContractError("comparison matrix has no '" + to_string(mode) + "' method");
}

RunConfig cell_config(const RunConfig& base, const Method& method, std::uint64_t seed) {
  RunConfig c = base;
  c.plan.loss_mode = method.loss_mode;
  c.plan.attack.family = method.family;
  c.plan.seed = seed;
  c.plan.attack.seed = seed;
  c.model.init_seed = seed;
  return c;
}

std::string config_hash(const RunConfig& config) {
  std::string text = config.to_text();
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

namespace {

CellResult run_cell(const RunConfig& base, const Method& method, std::uint64_t seed,
                    const MatrixOptions& options, const DataSplits& data) {
  CellResult cell;
  cell.method = method;
  cell.seed = seed;
  RunConfig cfg = cell_config(base, method, seed);
  cell.config_hash = config_hash(cfg);
  try {
    cfg.validate();
    auto started = std::chrono::steady_clock::now();
    TrainResult trained = run_train(cfg, data);
    cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!trained.records.empty()) cell.final_lambda = trained.records.back().lambda_t;

    RunConfig eval_cfg = cfg;
    eval_cfg.eval_attacks = {options.ra_preset};
    EvalReport report = run_eval(eval_cfg, trained.model, data.test);
    cell.standard_accuracy = report.standard_accuracy;
    cell.robust_accuracy = report.robust_accuracy.front().second;
    for (double eps : options.ra_sweep_eps) {
      RunConfig sweep = eval_cfg;
      sweep.plan.attack.epsilon = eps;
      sweep.plan.attack.alpha.reset();
      cell.ra_sweep.push_back(run_eval(sweep, trained.model, data.test).robust_accuracy.front().second);
    }
    if (options.eigen) cell.eigen_mean = run_eigen(cfg, trained.model, data.test).mean;
    if (options.sparsity) {
      for (const auto& r : run_sparsity(cfg, trained.model, data.test)) cell.sparsity_means.push_back(r.mean);
    }
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  return cell;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void write_metric_csv(const std::filesystem::path& path, const ComparisonMatrix& m,
                      const std::vector<std::pair<std::string, std::function<double(const CellResult&)>>>& rows_per_method) {
  std::ostringstream os;
  os << "method";
  for (auto s : m.seeds) os << ",seed_" << s;
  os << ",mean,std\n";
  for (std::size_t i = 0; i < m.methods.size(); ++i) {
    for (const auto& [suffix, get] : rows_per_method) {
      os << m.methods[i].label() << suffix;
      for (std::size_t s = 0; s < m.seeds.size(); ++s) {
        const CellResult& c = m.cell(i, s);
        os << ',' << (c.failed ? std::string("failed") : csv_number(get(c)));
      }
      SeedSummary sum = m.summary(i, get);
      os << ',' << csv_number(sum.mean) << ',' << csv_number(sum.stddev) << '\n';
    }
  }
  write_text_file(path, os.str());
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

ComparisonMatrix run_matrix(const RunConfig& base, const std::vector<Method>& methods,
                            const std::vector<std::uint64_t>& seeds, const MatrixOptions& options) {
  if (methods.empty()) throw ConfigError("methods", "at least one method is required");
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  base.validate();
  ComparisonMatrix m;
  m.methods = methods;
  m.seeds = seeds;
  m.sparsity_eps = base.analysis.sparsity_eps;
  m.ra_sweep_eps = options.ra_sweep_eps;
  m.cells.resize(methods.size() * seeds.size());
  DataSplits data = make_datasets(base.data);
  std::size_t workers = options.workers ? options.workers : worker_count();
  std::mutex report;
  parallel_for(m.cells.size(), [&](std::size_t k) {
    m.cells[k] = run_cell(base, methods[k / seeds.size()], seeds[k % seeds.size()], options, data);
    if (options.on_cell) {
      std::lock_guard<std::mutex> lock(report);
      options.on_cell(m.cells[k]);
    }
  }, workers);
  return m;
}

void write_matrix(const std::filesystem::path& dir, const ComparisonMatrix& m, const RunConfig& base) {
  using Getter = std::function<double(const CellResult&)>;
  write_metric_csv(dir / "comparison_SA.csv", m, {{"", [](const CellResult& c) { return c.standard_accuracy; }}});
  write_metric_csv(dir / "comparison_RA.csv", m, {{"", [](const CellResult& c) { return c.robust_accuracy; }}});
  write_metric_csv(dir / "comparison_eigen.csv", m, {{"", [](const CellResult& c) { return c.eigen_mean; }}});
  write_metric_csv(dir / "comparison_time.csv", m, {{"", [](const CellResult& c) { return c.wall_seconds; }}});
  std::vector<std::pair<std::string, Getter>> sparsity_rows;
  for (std::size_t e = 0; e < m.sparsity_eps.size(); ++e) {
    sparsity_rows.emplace_back("@eps=" + format_number(m.sparsity_eps[e]), [e](const CellResult& c) {
      return e < c.sparsity_means.size() ? c.sparsity_means[e] : std::nan("");
    });
  }
  write_metric_csv(dir / "comparison_sparsity.csv", m, sparsity_rows);
  if (!m.ra_sweep_eps.empty()) {
    std::vector<std::pair<std::string, Getter>> sweep_rows;
    for (std::size_t e = 0; e < m.ra_sweep_eps.size(); ++e) {
      sweep_rows.emplace_back("@eps=" + format_number(m.ra_sweep_eps[e]), [e](const CellResult& c) {
        return e < c.ra_sweep.size() ? c.ra_sweep[e] : std::nan("");
      });
    }
    write_metric_csv(dir / "comparison_RA_sweep.csv", m, sweep_rows);
  }

  nlohmann::ordered_json j;
  j["version"] = version();
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : base.echo()) cfg[k] = v;
  j["base_config"] = cfg;
  j["sparsity_eps"] = m.sparsity_eps;
  j["ra_sweep_eps"] = m.ra_sweep_eps;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const CellResult& c : m.cells) {
    nlohmann::ordered_json cj;
    cj["method"] = c.method.label();
    cj["seed"] = c.seed;
    cj["config_hash"] = c.config_hash;
    cj["failed"] = c.failed;
    if (c.failed) {
      cj["error"] = c.error;
    } else {
      cj["standard_accuracy"] = c.standard_accuracy;
      cj["robust_accuracy"] = c.robust_accuracy;
      cj["eigen_mean"] = number_or_null(c.eigen_mean);
      nlohmann::ordered_json sp = nlohmann::ordered_json::array();
      for (double v : c.sparsity_means) sp.push_back(number_or_null(v));
      cj["sparsity_means"] = sp;
      if (!c.ra_sweep.empty()) cj["ra_sweep"] = c.ra_sweep;
      cj["final_lambda"] = c.final_lambda;
      cj["wall_seconds"] = c.wall_seconds;
    }
    cells.push_back(cj);
  }
  j["cells"] = cells;
  write_text_file(dir / "bundle.json", j.dump(2) + "\n");
  write_effective_config(dir, base);
}

}  // namespace robustkit
