#include "robustkit/loss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "robustkit/error.hpp"

namespace robustkit::loss {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": sizes " + std::to_string(a) + " and " +
                         std::to_string(b) + " differ");
  }
}

void validate_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("logits must be [B x C], got " + shape_to_string(logits.shape()));
  }
  require_same_size(logits.rows(), labels.size(), "logits rows vs labels");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= logits.cols()) {
      throw ContractError("label " + std::to_string(l) + " outside [0, " +
                          std::to_string(logits.cols()) + ")");
    }
  }
}

// Row-wise p - y for row-major [b x c] logits.
std::vector<double> softmax_minus_onehot(std::span<const double> logits, std::size_t b,
                                         std::size_t c, std::span<const int> labels) {
  std::vector<double> out(b * c);
  for (std::size_t i = 0; i < b; ++i) {
    auto p = softmax(logits.subspan(i * c, c));
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = p[j] - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0);
    }
  }
  return out;
}

}  // namespace

std::vector<double> softmax(std::span<const double> z) {
  if (z.empty()) throw DimensionError("softmax of empty vector");
  double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double log_sum_exp(std::span<const double> z) {
  if (z.empty()) throw DimensionError("log_sum_exp of empty vector");
  double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - m);
  return m + std::log(total);
}

std::size_t one_hot_label(std::span<const double> y) {
  std::size_t ones = 0, label = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      ++ones;
      label = i;
    } else if (y[i] != 0.0) {
      throw ContractError("one-hot vector has entry " + std::to_string(y[i]) + " at index " +
                          std::to_string(i));
    }
  }
  if (ones != 1) {
    throw ContractError("one-hot vector must contain exactly one 1, found " + std::to_string(ones));
  }
  return label;
}

std::vector<double> one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw ContractError("label " + std::to_string(label) + " outside " + std::to_string(classes) +
                        " classes");
  }
  std::vector<double> y(classes, 0.0);
  y[label] = 1.0;
  return y;
}

LogitBundle LogitBundle::make(std::vector<double> z_clean, std::vector<double> z_adv,
                              std::size_t label) {
  std::size_t c = z_clean.size();
  return make(std::move(z_clean), std::move(z_adv), one_hot(label, c));
}

LogitBundle LogitBundle::make(std::vector<double> z_clean, std::vector<double> z_adv,
                              std::vector<double> y) {
  LogitBundle b;
  b.y_hat = softmax(z_clean);
  b.z_clean = std::move(z_clean);
  b.z_adv = std::move(z_adv);
  b.y = std::move(y);
  b.validate();
  return b;
}

std::size_t LogitBundle::label() const { return one_hot_label(y); }

void LogitBundle::validate() const {
  require_same_size(z_clean.size(), z_adv.size(), "LogitBundle z_clean vs z_adv");
  require_same_size(z_clean.size(), y.size(), "LogitBundle z_clean vs y");
  require_same_size(z_clean.size(), y_hat.size(), "LogitBundle z_clean vs y_hat");
  one_hot_label(y);
  double total = 0.0;
  for (double p : y_hat) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("y_hat entry outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractError("y_hat does not sum to 1");
  for (const auto* v : {&z_clean, &z_adv}) {
    for (double x : *v) {
      if (!std::isfinite(x)) throw NumericError("LogitBundle holds a non-finite logit");
    }
  }
}

BlendWeight::BlendWeight(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("blend weight " + std::to_string(lambda) + " outside [0, 1]");
  }
}

double cross_entropy(std::span<const double> z, std::size_t label) {
  if (label >= z.size()) throw ContractError("label outside logit range");
  return log_sum_exp(z) - z[label];
}

double cross_entropy(std::span<const double> z, std::span<const double> y) {
  require_same_size(z.size(), y.size(), "cross_entropy logits vs one-hot");
  return cross_entropy(z, one_hot_label(y));
}

std::vector<double> ce_logit_gradient(const LogitBundle& bundle) {
  std::vector<double> g(bundle.classes());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = bundle.y_hat[i] - bundle.y[i];
  return g;
}

Tensor ce_logit_hessian(std::span<const double> p) {
  std::size_t c = p.size();
  std::vector<double> h(c * c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) h[i * c + j] = i == j ? p[i] * (1.0 - p[i]) : -p[i] * p[j];
  }
  return Tensor::matrix(c, c, std::move(h));
}

HessianNormBound hessian_norm_bound(std::span<const double> p) {
  double l1 = 0.0;
  for (double v : p) l1 = std::max(l1, 2.0 * v - 2.0 * v * v);
  // linf equals l1 by symmetry.
  return {l1, std::sqrt(l1 * l1)};
}

namespace detail {

double qub_loss_with_coefficient(const LogitBundle& b, double coefficient) {
  double clean = cross_entropy(b.z_clean, b.y);
  double linear = 0.0, quadratic = 0.0;
  for (std::size_t i = 0; i < b.classes(); ++i) {
    double d = b.z_adv[i] - b.z_clean[i];
    linear += d * (b.y_hat[i] - b.y[i]);
    quadratic += d * d;
  }
  return clean + linear + coefficient * quadratic;
}

}  // namespace detail

double qub_loss(const LogitBundle& bundle) {
  return detail::qub_loss_with_coefficient(bundle, kQuadraticCoefficient);
}

double blended_loss(const LogitBundle& bundle, BlendWeight weight) {
  double lambda = weight.value();
  return (1.0 - lambda) * qub_loss(bundle) + lambda * cross_entropy(bundle.z_adv, bundle.y);
}

SecondTermComparison second_term_approximation_error(const Mlp& model,
                                                     std::span<const double> x,
                                                     std::span<const double> delta,
                                                     std::size_t label) {
  require_same_size(x.size(), delta.size(), "second term x vs delta");
  Mlp net = model.frozen();
  std::size_t d = x.size();
  Tensor xt = Tensor::matrix(1, d, {x.begin(), x.end()}, true);
  Tensor z = net.forward(xt);
  std::vector<int> labels{static_cast<int>(label)};
  Tensor l = cross_entropy(z, labels);
  backward(sum(l));
  auto gx = xt.grad();

  std::vector<double> shifted(d);
  for (std::size_t i = 0; i < d; ++i) shifted[i] = x[i] + delta[i];
  Tensor z_adv = net.forward(Tensor::matrix(1, d, shifted));
  auto bundle = LogitBundle::make({z.values().begin(), z.values().end()},
                                  {z_adv.values().begin(), z_adv.values().end()}, label);
  auto g = ce_logit_gradient(bundle);

  SecondTermComparison out{0.0, 0.0};
  for (std::size_t i = 0; i < g.size(); ++i) out.exact += (bundle.z_adv[i] - bundle.z_clean[i]) * g[i];
  for (std::size_t i = 0; i < d; ++i) out.approx += delta[i] * gx[i];
  return out;
}

bool check_ce_convexity(std::span<const double> z1, std::span<const double> z2,
                        std::span<const double> y, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("lambda outside [0, 1]");
  require_same_size(z1.size(), z2.size(), "convexity z1 vs z2");
  std::vector<double> mid(z1.size());
  for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = lambda * z1[i] + (1.0 - lambda) * z2[i];
  double lhs = cross_entropy(mid, y);
  double rhs = lambda * cross_entropy(z1, y) + (1.0 - lambda) * cross_entropy(z2, y);
  return lhs <= rhs + 1e-12;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  validate_labels(logits, labels);
  std::size_t b = logits.rows(), c = logits.cols();
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) out[i] = cross_entropy(logits.row(i), static_cast<std::size_t>(labels[i]));
  std::vector<int> kept(labels.begin(), labels.end());
  return robustkit::detail::record(
      "cross_entropy", Shape{b}, std::move(out), {logits},
      [b, c, kept = std::move(kept)](robustkit::detail::Node& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        auto& g = robustkit::detail::grad_buffer(parent);
        auto diff = softmax_minus_onehot(parent.value, b, c, kept);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += diff[i * c + j] * self.grad[i];
      });
}

Tensor qub_loss(const Tensor& z_clean, const Tensor& z_adv, std::span<const int> labels) {
  validate_labels(z_clean, labels);
  if (z_clean.shape() != z_adv.shape()) {
    throw DimensionError("qub_loss: z_clean " + shape_to_string(z_clean.shape()) + " vs z_adv " +
                         shape_to_string(z_adv.shape()));
  }
  Tensor g(z_clean.shape(),
           softmax_minus_onehot(z_clean.values(), z_clean.rows(), z_clean.cols(), labels));
  Tensor diff = sub(z_adv, z_clean);
  Tensor linear = sum_rows(mul(diff, g));
  Tensor quadratic = scale(sum_rows(mul(diff, diff)), kQuadraticCoefficient);
  return add(add(cross_entropy(z_clean, labels), linear), quadratic);
}

Tensor blended_loss(const Tensor& z_clean, const Tensor& z_adv, std::span<const int> labels,
                    BlendWeight weight) {
  double lambda = weight.value();
  return add(scale(qub_loss(z_clean, z_adv, labels), 1.0 - lambda),
             scale(cross_entropy(z_adv, labels), lambda));
}

}  // namespace robustkit::loss
