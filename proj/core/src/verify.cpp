#include "robustkit/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "robustkit/loss.hpp"
#include "robustkit/model.hpp"
#include "robustkit/random.hpp"

namespace robustkit::verify {

namespace {

std::vector<double> random_logits(Rng& rng, std::size_t c, double scale) {
  std::vector<double> z(c);
  for (double& v : z) v = rng.uniform(-scale, scale);
  return z;
}

std::string vec_text(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ')';
  return os.str();
}

std::string num_text(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

PropertyResult timed(const std::string& name, const std::function<void(PropertyResult&)>& body) {
  PropertyResult r;
  r.name = name;
  auto t0 = std::chrono::steady_clock::now();
  body(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

void fail(PropertyResult& r, const std::string& counterexample) {
  if (r.passed) r.counterexample = counterexample;
  r.passed = false;
}

}  // namespace

double spectral_norm_symmetric(std::span<const double> m, std::size_t n, std::uint64_t seed,
                               int max_iters, double tol) {
  Rng rng(seed);
  std::vector<double> v(n), w(n);
  for (double& x : v) x = rng.normal();
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += m[i * n + j] * v[j];
      w[i] = s;
    }
    double next = 0.0;
    for (double x : w) next += x * x;
    next = std::sqrt(next);
    bool done = std::abs(next - lambda) <= tol * std::max(1.0, next);
    lambda = next;
    v.swap(w);
    if (done) break;
  }
  return lambda;
}

PropertyResult check_upper_bound(const VerifyOptions& o) {
  return timed("qub_upper_bound", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 1));
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < o.bound_cases; ++k) {
      std::size_t c = 2 + rng.below(19);
      auto z = random_logits(rng, c, 10.0);
      std::vector<double> z_adv(c);
      for (std::size_t i = 0; i < c; ++i) z_adv[i] = z[i] + rng.uniform(-5.0, 5.0);
      std::size_t label = rng.below(c);
      auto b = loss::LogitBundle::make(z, z_adv, label);
      double bound = loss::detail::qub_loss_with_coefficient(b, o.qub_coefficient);
      double target = loss::cross_entropy(z_adv, label);
      worst = std::min(worst, bound - target);
      ++r.checks;
      if (bound < target - 1e-9) {
        fail(r, "z_clean=" + vec_text(z) + " z_adv=" + vec_text(z_adv) + " label=" + std::to_string(label) +
                    " qub=" + num_text(bound) + " ce_adv=" + num_text(target));
      }
    }
    r.detail = "min(qub - ce_adv) = " + num_text(worst) + ", coefficient " + num_text(o.qub_coefficient);
  });
}

PropertyResult check_logit_gradient(const VerifyOptions& o) {
  return timed("ce_logit_gradient", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 2));
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < o.gradient_cases; ++k) {
      std::size_t c = 2 + rng.below(19);
      auto z = random_logits(rng, c, 3.0);
      std::size_t label = rng.below(c);
      auto g = loss::ce_logit_gradient(loss::LogitBundle::make(z, z, label));
      double err_num = 0.0, ref = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        auto zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        double fd = (loss::cross_entropy(zp, label) - loss::cross_entropy(zm, label)) / (2 * h);
        err_num = std::max(err_num, std::abs(fd - g[i]));
        ref = std::max(ref, std::abs(fd));
      }
      double rel = err_num / std::max(ref, 1e-12);
      worst = std::max(worst, rel);
      ++r.checks;
      if (rel >= 1e-6) fail(r, "z=" + vec_text(z) + " label=" + std::to_string(label) + " rel_err=" + num_text(rel));
    }
    r.detail = "max rel err = " + num_text(worst);
  });
}

PropertyResult check_logit_hessian(const VerifyOptions& o) {
  return timed("ce_logit_hessian", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 3));
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < o.hessian_cases; ++k) {
      std::size_t c = 2 + rng.below(9);
      auto z = random_logits(rng, c, 3.0);
      std::size_t label = rng.below(c);
      auto p = loss::softmax(z);
      Tensor hess = loss::ce_logit_hessian(p);
      double err = 0.0, asym = 0.0, row_sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        auto zp = z, zm = z;
        zp[j] += h;
        zm[j] -= h;
        auto gp = loss::ce_logit_gradient(loss::LogitBundle::make(zp, zp, label));
        auto gm = loss::ce_logit_gradient(loss::LogitBundle::make(zm, zm, label));
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
          err = std::max(err, std::abs((gp[i] - gm[i]) / (2 * h) - hess.at(i, j)));
          asym = std::max(asym, std::abs(hess.at(i, j) - hess.at(j, i)));
          s += hess.at(j, i);
        }
        row_sum = std::max(row_sum, std::abs(s));
      }
      worst = std::max(worst, err);
      ++r.checks;
      if (err >= 1e-6 || asym > 0.0 || row_sum > 1e-12) {
        fail(r, "z=" + vec_text(z) + " fd_err=" + num_text(err) + " asym=" + num_text(asym) +
                    " row_sum=" + num_text(row_sum));
      }
    }
    r.detail = "max abs err = " + num_text(worst);
  });
}

PropertyResult check_hessian_norm(const VerifyOptions& o) {
  return timed("hessian_norm_bound", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 4));
    double largest = 0.0;
    for (std::size_t k = 0; k < o.norm_cases; ++k) {
      std::size_t c = 2 + rng.below(19);
      auto p = loss::softmax(random_logits(rng, c, rng.uniform(0.1, 8.0)));
      Tensor hess = loss::ce_logit_hessian(p);
      double norm = spectral_norm_symmetric(hess.values(), c, derive_seed(o.seed, 100 + k));
      auto bound = loss::hessian_norm_bound(p);
      largest = std::max(largest, norm);
      ++r.checks;
      if (norm > 0.5 + 1e-9 || norm > bound.spectral_upper + 1e-9 || bound.spectral_upper > 0.5 + 1e-12) {
        fail(r, "p=" + vec_text(p) + " norm=" + num_text(norm) + " upper=" + num_text(bound.spectral_upper));
      }
    }
    std::vector<double> peak(5, 0.0);
    peak[0] = peak[1] = 0.5;
    Tensor hess = loss::ce_logit_hessian(peak);
    double attained = spectral_norm_symmetric(hess.values(), peak.size(), o.seed);
    ++r.checks;
    if (attained < 0.499) fail(r, "p=" + vec_text(peak) + " attained only " + num_text(attained));
    r.detail = "max norm = " + num_text(largest) + ", at (1/2,1/2,0,..) = " + num_text(attained);
  });
}

PropertyResult check_convexity(const VerifyOptions& o) {
  return timed("ce_convexity", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 5));
    for (std::size_t k = 0; k < o.convexity_cases; ++k) {
      std::size_t c = 2 + rng.below(19);
      auto z1 = random_logits(rng, c, 10.0);
      auto z2 = random_logits(rng, c, 10.0);
      auto y = loss::one_hot(rng.below(c), c);
      double lambda = rng.uniform();
      ++r.checks;
      if (!loss::check_ce_convexity(z1, z2, y, lambda)) {
        fail(r, "z1=" + vec_text(z1) + " z2=" + vec_text(z2) + " lambda=" + num_text(lambda));
      }
    }
    r.detail = "violations: " + std::string(r.passed ? "0" : ">0");
  });
}

PropertyResult check_chain_rule_scaling(const VerifyOptions& o) {
  return timed("chain_rule_scaling", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 6));
    double ratio_sum = 0.0;
    const double s = 1e-2;
    for (std::size_t k = 0; k < o.chain_rule_trials; ++k) {
      MlpConfig cfg{{4, 16, 16, 3}, Activation::tanh, derive_seed(o.seed, 1000 + k)};
      Mlp model(cfg);
      std::vector<double> x(4), dir(4);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      for (double& v : dir) v = rng.rademacher();
      std::size_t label = rng.below(3);
      auto error_at = [&](double scale) {
        std::vector<double> d(dir);
        for (double& v : d) v *= scale;
        auto cmp = loss::second_term_approximation_error(model, x, d, label);
        return std::abs(cmp.exact - cmp.approx);
      };
      ratio_sum += error_at(s) / error_at(s / 2);
      ++r.checks;
    }
    double mean_ratio = ratio_sum / static_cast<double>(o.chain_rule_trials);
    if (!(mean_ratio >= 3.0 && mean_ratio <= 5.0)) fail(r, "mean error ratio " + num_text(mean_ratio));

    // A linear model makes the first-order expansion exact.
    MlpConfig lin{{4, 3}, Activation::relu, derive_seed(o.seed, 7)};
    Mlp linear(lin);
    double worst_linear = 0.0;
    for (int k = 0; k < 20; ++k) {
      std::vector<double> x(4), d(4);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      for (double& v : d) v = rng.uniform(-0.5, 0.5);
      auto cmp = loss::second_term_approximation_error(linear, x, d, rng.below(3));
      worst_linear = std::max(worst_linear, std::abs(cmp.exact - cmp.approx));
      ++r.checks;
    }
    if (worst_linear >= 1e-12) fail(r, "linear model error " + num_text(worst_linear));
    r.detail = "mean ratio = " + num_text(mean_ratio) + ", linear max err = " + num_text(worst_linear);
  });
}

PropertyResult check_blend_affine(const VerifyOptions& o) {
  return timed("blend_affine", [&](PropertyResult& r) {
    Rng rng(derive_seed(o.seed, 8));
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      std::size_t c = 2 + rng.below(9);
      auto b = loss::LogitBundle::make(random_logits(rng, c, 5.0), random_logits(rng, c, 5.0), rng.below(c));
      double lambda = rng.uniform();
      double at0 = loss::blended_loss(b, loss::BlendWeight(0.0));
      double at1 = loss::blended_loss(b, loss::BlendWeight(1.0));
      double mid = loss::blended_loss(b, loss::BlendWeight(lambda));
      double err = std::abs(mid - ((1 - lambda) * at0 + lambda * at1));
      bool endpoints = at0 == loss::qub_loss(b) && at1 == loss::cross_entropy(b.z_adv, b.y);
      worst = std::max(worst, err);
      ++r.checks;
      if (err > 1e-12 || !endpoints) fail(r, "lambda=" + num_text(lambda) + " err=" + num_text(err));
    }
    r.detail = "max affine err = " + num_text(worst);
  });
}

std::vector<PropertyResult> run_property_suite(const VerifyOptions& o) {
  return {check_upper_bound(o),     check_logit_gradient(o), check_logit_hessian(o),
          check_hessian_norm(o),    check_convexity(o),      check_chain_rule_scaling(o),
          check_blend_affine(o)};
}

}  // namespace robustkit::verify
