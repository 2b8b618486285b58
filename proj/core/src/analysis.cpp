#include "robustkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "robustkit/attack.hpp"
#include "robustkit/error.hpp"
#include "robustkit/loss.hpp"
#include "robustkit/parallel.hpp"
#include "robustkit/random.hpp"

namespace robustkit::analysis {

namespace {

using json = nlohmann::ordered_json;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

json config_json(const ConfigEcho& config) {
  json j = json::object();
  for (const auto& [k, v] : config) j[k] = v;
  return j;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void require_sample(const Mlp& model, std::span<const double> x, int label) {
  if (x.size() != model.input_width()) {
    throw DimensionError("sample width " + std::to_string(x.size()) + " does not match model input " +
                         std::to_string(model.input_width()));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) {
    throw ContractError("label " + std::to_string(label) + " outside model classes");
  }
}

}  // namespace

LandscapeGrid landscape(const Mlp& model, std::span<const double> x, int label, double eps,
                        std::size_t resolution, std::uint64_t seed) {
  require_sample(model, x, label);
  if (!(eps > 0.0)) throw ContractError("landscape eps must be > 0");
  if (resolution < 2) throw ContractError("landscape resolution must be >= 2");
  Mlp net = model.frozen();
  const std::size_t d = x.size();
  std::vector<int> one{label};
  Tensor x0 = Tensor::matrix(1, d, {x.begin(), x.end()});

  LandscapeGrid grid;
  grid.resolution = resolution;
  grid.eps = eps;
  InputGradient g = input_gradient(net, x0, one);
  grid.d_g.resize(d);
  grid.zero_gradient = true;
  for (std::size_t k = 0; k < d; ++k) {
    grid.d_g[k] = sign(g.grad.values()[k]);
    if (grid.d_g[k] != 0.0) grid.zero_gradient = false;
  }
  Rng rng(seed);
  grid.d_r.resize(d);
  for (double& v : grid.d_r) v = rng.rademacher();

  const std::size_t points = resolution * resolution;
  std::vector<double> batch(points * d);
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      double* row = batch.data() + (i * resolution + j) * d;
      for (std::size_t k = 0; k < d; ++k) {
        row[k] = x[k] + grid.offset(i) * grid.d_g[k] + grid.offset(j) * grid.d_r[k];
      }
    }
  }
  Tensor z = net.forward(Tensor::matrix(points, d, std::move(batch)));
  std::vector<int> labels(points, label);
  Tensor l = loss::cross_entropy(z, labels);
  grid.values.assign(l.values().begin(), l.values().end());
  grid.correct.resize(points);
  for (std::size_t p = 0; p < points; ++p) {
    grid.correct[p] = static_cast<int>(argmax(z.row(p))) == label ? 1 : 0;
  }
  return grid;
}

void write_landscape_csv(std::ostream& out, const LandscapeGrid& grid) {
  out << "i,j,offset_g,offset_r,loss,correct\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      out << i << ',' << j << ',' << grid.offset(i) << ',' << grid.offset(j) << ','
          << grid.value(i, j) << ',' << (grid.is_correct(i, j) ? 1 : 0) << '\n';
    }
  }
}

std::vector<double> hessian_vector_product(const GradientFn& gradient, std::span<const double> x,
                                           std::span<const double> v, double fd_step) {
  double nv = norm2(v);
  if (nv == 0.0) return std::vector<double>(x.size(), 0.0);
  double h = fd_step / nv;
  std::vector<double> plus(x.size()), minus(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus[i] = x[i] + h * v[i];
    minus[i] = x[i] - h * v[i];
  }
  auto gp = gradient(plus);
  auto gm = gradient(minus);
  std::vector<double> hv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * h);
  return hv;
}

EigenEstimate dominant_hessian_eigenvalue(const GradientFn& gradient, std::span<const double> x,
                                          const PowerIterationOptions& options) {
  if (options.max_iters < 1) throw ContractError("max_iters must be >= 1");
  if (!(options.fd_step > 0.0)) throw ContractError("fd_step must be > 0");
  const std::size_t d = x.size();
  Rng rng(options.seed);
  std::vector<double> v(d);
  for (double& e : v) e = rng.normal();
  double nv = norm2(v);
  for (double& e : v) e /= nv;

  EigenEstimate est;
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iters; ++it) {
    auto hv = hessian_vector_product(gradient, x, v, options.fd_step);
    detail::check_finite("Hessian-vector product", hv);
    est.iterations = it;
    double rq = dot(v, hv);
    double nh = norm2(hv);
    if (nh == 0.0) {
      est.lambda = 0.0;
      est.residual = 0.0;
      est.degenerate = true;
      return est;
    }
    double res = 0.0;
    for (std::size_t i = 0; i < d; ++i) res += (hv[i] - rq * v[i]) * (hv[i] - rq * v[i]);
    est.lambda = rq;
    est.residual = std::sqrt(res);
    if (rq < previous - 1e-6 * std::max(1.0, std::abs(previous))) ++est.rayleigh_drops;
    previous = rq;
    if (est.residual <= options.tol * std::max(1.0, std::abs(rq))) {
      est.converged = true;
      return est;
    }
    for (std::size_t i = 0; i < d; ++i) v[i] = hv[i] / nh;
  }
  return est;
}

EigenEstimate dominant_input_eigenvalue(const Mlp& model, std::span<const double> x, int label,
                                        const PowerIterationOptions& options) {
  require_sample(model, x, label);
  Mlp net = model.frozen();
  std::vector<int> one{label};
  GradientFn grad = [&](std::span<const double> point) {
    InputGradient g = input_gradient(net, Tensor::matrix(1, point.size(), {point.begin(), point.end()}), one);
    return std::vector<double>(g.grad.values().begin(), g.grad.values().end());
  };
  return dominant_hessian_eigenvalue(grad, x, options);
}

EigenReport mean_dominant_eigenvalue(const Mlp& model, const Dataset& data, std::size_t n_samples,
                                     const PowerIterationOptions& options) {
  data.validate();
  if (n_samples == 0 || n_samples > data.size()) {
    throw ContractError("n_samples must lie in [1, " + std::to_string(data.size()) + "]");
  }
  std::vector<EigenEstimate> per(n_samples);
  Mlp net = model.frozen();
  parallel_for(n_samples, [&](std::size_t i) {
    PowerIterationOptions o = options;
    o.seed = derive_seed(options.seed, i);
    per[i] = dominant_input_eigenvalue(net, data.sample(i), data.y[i], o);
  });
  EigenReport r;
  double total = 0.0;
  for (const EigenEstimate& e : per) {
    r.estimates.push_back(e.lambda);
    r.residuals.push_back(e.residual);
    r.iterations.push_back(e.iterations);
    r.converged.push_back(e.converged);
    r.degenerate.push_back(e.degenerate);
    if (e.lambda < -1e-6) ++r.n_negative;
    // A vanishing Hessian-vector product is an exact zero eigenvalue.
    if (e.converged || e.degenerate) {
      total += e.lambda;
      ++r.n_converged;
    }
  }
  r.mean = r.n_converged > 0 ? total / static_cast<double>(r.n_converged)
                             : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_eigen_json(std::ostream& out, const EigenReport& r, const ConfigEcho& config) {
  json j;
  j["kind"] = "dominant_input_hessian_eigenvalue";
  j["n_samples"] = r.estimates.size();
  j["n_converged"] = r.n_converged;
  j["n_negative"] = r.n_negative;
  j["mean"] = number_or_null(r.mean);
  j["estimates"] = r.estimates;
  j["residuals"] = r.residuals;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["degenerate"] = r.degenerate;
  j["config"] = config_json(config);
  out << j.dump(2) << '\n';
}

SparsityReport sparsity(const Mlp& model, const Dataset& data, double eps,
                        const SparsityOptions& options) {
  data.validate();
  if (!(eps > 0.0)) throw ContractError("sparsity eps must be > 0");
  if (options.directions < 1) throw ContractError("sparsity needs at least one direction");
  if (options.line_search_iters < 0) throw ContractError("line_search_iters must be >= 0");
  Mlp net = model.frozen();
  const std::size_t n = options.max_samples == 0 ? data.size() : std::min(options.max_samples, data.size());
  const std::size_t d = data.dim();
  const std::size_t rays = options.directions;
  Dataset ds = data.head(n);

  SparsityReport report;
  report.eps = eps;
  report.distances.assign(n, std::numeric_limits<double>::quiet_NaN());
  auto clean_pred = predict(net, ds.x);

  // Unit-L-infinity ray directions, [n x rays x d]. Ray 0 follows PGD; the
  // rest are Rademacher draws seeded per sample so they do not depend on eps.
  std::vector<double> dirs(n * rays * d, 0.0);
  std::vector<std::uint8_t> usable(n * rays, 1);
  AttackSpec spec = AttackSpec::pgd_preset(options.pgd_steps, 1, eps, eps / 4.0);
  spec.clip_input = data.feature_box;
  spec.seed = derive_seed(options.seed, 0x9d);
  AttackResult adv = pgd(net, ds.x, ds.y, spec);
  for (std::size_t i = 0; i < n; ++i) {
    auto delta = adv.delta.row(i);
    double m = 0.0;
    for (double v : delta) m = std::max(m, std::abs(v));
    double* ray0 = dirs.data() + (i * rays) * d;
    if (m > 0.0) {
      for (std::size_t k = 0; k < d; ++k) ray0[k] = delta[k] / m;
    } else {
      usable[i * rays] = 0;
    }
    Rng rng(derive_seed(options.seed, i));
    for (std::size_t r = 1; r < rays; ++r) {
      double* ray = dirs.data() + (i * rays + r) * d;
      for (std::size_t k = 0; k < d; ++k) ray[k] = rng.rademacher();
    }
  }

  // Active rays: correctly classified samples with a usable direction.
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (clean_pred[i] != ds.y[i]) {
      report.distances[i] = 0.0;
      ++report.n_misclassified;
      continue;
    }
    for (std::size_t r = 0; r < rays; ++r) {
      if (usable[i * rays + r]) active.push_back(i * rays + r);
    }
  }
  auto flipped = [&](std::span<const std::size_t> which, std::span<const double> scales) {
    std::vector<double> pts(which.size() * d);
    for (std::size_t a = 0; a < which.size(); ++a) {
      std::size_t i = which[a] / rays;
      auto x = ds.sample(i);
      const double* ray = dirs.data() + which[a] * d;
      for (std::size_t k = 0; k < d; ++k) {
        double v = x[k] + scales[a] * eps * ray[k];
        if (data.feature_box) v = std::clamp(v, data.feature_box->lo, data.feature_box->hi);
        pts[a * d + k] = v;
      }
    }
    std::vector<std::uint8_t> out(which.size(), 0);
    if (which.empty()) return out;
    auto pred = predict(net, Tensor::matrix(which.size(), d, std::move(pts)));
    for (std::size_t a = 0; a < which.size(); ++a) out[a] = pred[a] != ds.y[which[a] / rays] ? 1 : 0;
    return out;
  };

  std::vector<double> ones(active.size(), 1.0);
  auto at_full = flipped(active, ones);
  std::vector<std::size_t> live;
  for (std::size_t a = 0; a < active.size(); ++a) {
    if (at_full[a]) live.push_back(active[a]);
  }
  std::vector<double> lo(live.size(), 0.0), hi(live.size(), 1.0), mid(live.size());
  for (int it = 0; it < options.line_search_iters; ++it) {
    for (std::size_t a = 0; a < live.size(); ++a) mid[a] = 0.5 * (lo[a] + hi[a]);
    auto f = flipped(live, mid);
    for (std::size_t a = 0; a < live.size(); ++a) (f[a] ? hi[a] : lo[a]) = mid[a];
  }
  for (std::size_t a = 0; a < live.size(); ++a) {
    std::size_t i = live[a] / rays;
    double dist = hi[a] * eps;
    if (std::isnan(report.distances[i]) || dist < report.distances[i]) report.distances[i] = dist;
  }

  double total = 0.0;
  for (double v : report.distances) {
    if (std::isnan(v)) {
      ++report.n_unattackable;
    } else {
      ++report.n_attackable;
      total += v;
    }
  }
  report.mean_defined = report.n_attackable > 0;
  report.mean = report.mean_defined ? total / static_cast<double>(report.n_attackable)
                                    : std::numeric_limits<double>::quiet_NaN();
  return report;
}

std::vector<SparsityReport> sparsity_sweep(const Mlp& model, const Dataset& data,
                                           std::span<const double> eps_list,
                                           const SparsityOptions& options) {
  if (eps_list.empty()) throw ContractError("sparsity sweep needs at least one eps");
  std::vector<SparsityReport> out;
  for (double eps : eps_list) out.push_back(sparsity(model, data, eps, options));
  return out;
}

void write_sparsity_json(std::ostream& out, std::span<const SparsityReport> reports,
                         const ConfigEcho& config) {
  json j;
  j["kind"] = "adversarial_sparsity";
  j["method"] = "ray bisection: one PGD ray plus Rademacher rays, stand-in for the nearest attackable point";
  json blocks = json::array();
  for (const SparsityReport& r : reports) {
    json b;
    b["eps"] = r.eps;
    b["mean"] = number_or_null(r.mean);
    b["mean_defined"] = r.mean_defined;
    b["n_samples"] = r.distances.size();
    b["n_misclassified"] = r.n_misclassified;
    b["n_attackable"] = r.n_attackable;
    b["n_unattackable"] = r.n_unattackable;
    json dist = json::array();
    for (double v : r.distances) dist.push_back(number_or_null(v));
    b["distances"] = std::move(dist);
    blocks.push_back(std::move(b));
  }
  j["reports"] = std::move(blocks);
  j["config"] = config_json(config);
  out << j.dump(2) << '\n';
}

}  // namespace robustkit::analysis
