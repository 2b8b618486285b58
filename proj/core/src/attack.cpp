#include "robustkit/attack.hpp"

#include <algorithm>
#include <cmath>

#include "robustkit/error.hpp"
#include "robustkit/loss.hpp"
#include "robustkit/random.hpp"

namespace robustkit {

std::string to_string(AttackFamily family) {
  switch (family) {
    case AttackFamily::fgsm: return "fgsm";
    case AttackFamily::fgsm_rs: return "fgsm_rs";
    case AttackFamily::n_fgsm: return "n_fgsm";
    case AttackFamily::pgd: return "pgd";
  }
  return "?";
}

AttackFamily parse_attack_family(const std::string& name) {
  if (name == "fgsm") return AttackFamily::fgsm;
  if (name == "fgsm_rs") return AttackFamily::fgsm_rs;
  if (name == "n_fgsm") return AttackFamily::n_fgsm;
  if (name == "pgd") return AttackFamily::pgd;
  throw ConfigError("attack", "unknown attack family '" + name + "'");
}

double AttackSpec::step_size() const {
  if (alpha) return *alpha;
  switch (family) {
    case AttackFamily::fgsm: return epsilon;
    case AttackFamily::fgsm_rs: return 1.25 * epsilon;
    case AttackFamily::n_fgsm: return epsilon;
    case AttackFamily::pgd: return epsilon / 4.0;
  }
  return epsilon;
}

int AttackSpec::effective_steps() const { return family == AttackFamily::pgd ? steps : 1; }

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon", "must be >= 0");
  if (alpha && !(*alpha > 0.0 || (*alpha == 0.0 && epsilon == 0.0))) {
    throw ConfigError("alpha", "must be > 0");
  }
  if (family == AttackFamily::pgd && steps < 1) throw ConfigError("attack_steps", "must be >= 1");
  if (restarts < 1) throw ConfigError("restarts", "must be >= 1");
  if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale", "must be >= 0");
  if (clip_input && !(clip_input->lo < clip_input->hi)) {
    throw ConfigError("clip", "lo must be below hi");
  }
}

AttackSpec AttackSpec::pgd_preset(int steps, int restarts, double epsilon, double alpha) {
  AttackSpec s;
  s.family = AttackFamily::pgd;
  s.steps = steps;
  s.restarts = restarts;
  s.epsilon = epsilon;
  s.alpha = alpha;
  return s;
}

AttackSpec resolve_attack_preset(const std::string& name, const AttackSpec& base) {
  AttackSpec s = base;
  if (name == "fgsm") {
    s.family = AttackFamily::fgsm;
    s.alpha.reset();
    s.steps = 1;
    s.restarts = 1;
    return s;
  }
  s.family = AttackFamily::pgd;
  s.random_start = true;
  if (!base.alpha || base.family != AttackFamily::pgd) s.alpha = base.epsilon / 4.0;
  if (name == "pgd10") {
    s.steps = 10;
    s.restarts = 1;
  } else if (name == "pgd20") {
    s.steps = 20;
    s.restarts = 1;
  } else if (name == "pgd50-10") {
    s.steps = 50;
    s.restarts = 10;
  } else {
    throw ConfigError("eval_attacks", "unknown attack preset '" + name + "'");
  }
  return s;
}

Tensor project_linf(const Tensor& delta, double epsilon) {
  std::vector<double> out(delta.values().begin(), delta.values().end());
  for (double& v : out) v = std::clamp(v, -epsilon, epsilon);
  return Tensor(delta.shape(), std::move(out));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<double> per_sample_loss(const Mlp& model, const Tensor& x, std::span<const int> labels) {
  Tensor z = model.frozen().forward(x.detach());
  Tensor l = loss::cross_entropy(z, labels);
  return {l.values().begin(), l.values().end()};
}

InputGradient input_gradient(const Mlp& model, const Tensor& x, std::span<const int> labels) {
  Mlp net = model.frozen();
  Tensor xin = x.detach();
  xin.set_requires_grad(true);
  Tensor l = loss::cross_entropy(net.forward(xin), labels);
  // Samples are independent, so the gradient of the sum holds every
  // per-sample input gradient in its own row.
  backward(sum(l));
  return {std::vector<double>(l.values().begin(), l.values().end()),
          Tensor(x.shape(), {xin.grad().begin(), xin.grad().end()})};
}

namespace {

void check_inputs(const Mlp& model, const Tensor& x, std::span<const int> labels,
                  const AttackSpec& spec, AttackFamily expected) {
  spec.validate();
  if (spec.family != expected) {
    throw ContractError("attack called with family " + to_string(spec.family) + ", expected " +
                        to_string(expected));
  }
  if (x.rank() != 2 || x.cols() != model.input_width() || x.rows() != labels.size()) {
    throw DimensionError("attack input " + shape_to_string(x.shape()) + " does not match model/labels");
  }
}

// Applies the optional box: returns clip(x + delta) - x.
std::vector<double> clip_delta(std::span<const double> x, std::vector<double> delta,
                               const std::optional<FeatureBox>& box) {
  if (!box) return delta;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = std::clamp(x[i] + delta[i], box->lo, box->hi) - x[i];
  }
  return delta;
}

Tensor shifted(const Tensor& x, std::span<const double> delta) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
  return Tensor(x.shape(), std::move(out));
}

std::vector<double> grad_signs(const Mlp& net, const Tensor& point, std::span<const int> labels) {
  InputGradient g = input_gradient(net, point, labels);
  detail::check_finite("input gradient", g.grad.values());
  std::vector<double> s(g.grad.numel());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = sign(g.grad.values()[i]);
  return s;
}

AttackResult finish(const Mlp& net, const Tensor& x, std::vector<double> delta,
                    std::span<const int> labels, std::size_t queries) {
  Tensor x_adv = shifted(x, delta);
  auto losses = per_sample_loss(net, x_adv, labels);
  return {std::move(x_adv), Tensor(x.shape(), std::move(delta)), std::move(losses), queries};
}

std::vector<double> uniform_noise(std::size_t n, double radius, Rng& rng) {
  std::vector<double> v(n);
  for (double& e : v) e = radius * (2.0 * rng.uniform() - 1.0);
  return v;
}

// One signed-gradient step of size alpha from x + start.
std::vector<double> single_step(const Mlp& net, const Tensor& x, std::span<const int> labels,
                                std::vector<double> start, double alpha) {
  Tensor from = shifted(x, start);
  auto s = grad_signs(net, from, labels);
  for (std::size_t i = 0; i < start.size(); ++i) start[i] += alpha * s[i];
  return start;
}

}  // namespace

AttackResult fgsm(const Mlp& model, const Tensor& x, std::span<const int> labels,
                  const AttackSpec& spec) {
  check_inputs(model, x, labels, spec, AttackFamily::fgsm);
  Mlp net = model.frozen();
  auto s = grad_signs(net, x, labels);
  std::vector<double> delta(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) delta[i] = spec.epsilon * s[i];
  delta = clip_delta(x.values(), std::move(delta), spec.clip_input);
  return finish(net, x, std::move(delta), labels, 1);
}

AttackResult fgsm_rs(const Mlp& model, const Tensor& x, std::span<const int> labels,
                     const AttackSpec& spec) {
  check_inputs(model, x, labels, spec, AttackFamily::fgsm_rs);
  Mlp net = model.frozen();
  Rng rng(spec.seed);
  auto start = clip_delta(x.values(), uniform_noise(x.numel(), spec.epsilon, rng), spec.clip_input);
  auto delta = single_step(net, x, labels, std::move(start), spec.step_size());
  for (double& v : delta) v = std::clamp(v, -spec.epsilon, spec.epsilon);
  delta = clip_delta(x.values(), std::move(delta), spec.clip_input);
  return finish(net, x, std::move(delta), labels, 1);
}

AttackResult n_fgsm(const Mlp& model, const Tensor& x, std::span<const int> labels,
                    const AttackSpec& spec) {
  check_inputs(model, x, labels, spec, AttackFamily::n_fgsm);
  Mlp net = model.frozen();
  Rng rng(spec.seed);
  auto start = uniform_noise(x.numel(), spec.noise_scale * spec.epsilon, rng);
  // No projection back onto the eps-ball.
  auto delta = single_step(net, x, labels, std::move(start), spec.step_size());
  delta = clip_delta(x.values(), std::move(delta), spec.clip_input);
  return finish(net, x, std::move(delta), labels, 1);
}

AttackResult pgd(const Mlp& model, const Tensor& x, std::span<const int> labels,
                 const AttackSpec& spec) {
  check_inputs(model, x, labels, spec, AttackFamily::pgd);
  Mlp net = model.frozen();
  Rng rng(spec.seed);
  const std::size_t n = x.rows(), d = x.cols();
  const double eps = spec.epsilon, alpha = spec.step_size();
  std::vector<double> best_delta(x.numel(), 0.0);
  std::vector<double> best_loss(n, -1.0);
  std::size_t queries = 0;
  for (int r = 0; r < spec.restarts; ++r) {
    std::vector<double> delta = spec.random_start ? uniform_noise(x.numel(), eps, rng)
                                                  : std::vector<double>(x.numel(), 0.0);
    delta = clip_delta(x.values(), std::move(delta), spec.clip_input);
    for (int t = 0; t < spec.steps; ++t) {
      delta = single_step(net, x, labels, std::move(delta), alpha);
      ++queries;
      for (double& v : delta) v = std::clamp(v, -eps, eps);
      delta = clip_delta(x.values(), std::move(delta), spec.clip_input);
    }
    auto losses = per_sample_loss(net, shifted(x, delta), labels);
    for (std::size_t i = 0; i < n; ++i) {
      if (losses[i] > best_loss[i]) {
        best_loss[i] = losses[i];
        std::copy_n(delta.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                    best_delta.begin() + static_cast<std::ptrdiff_t>(i * d));
      }
    }
  }
  Tensor x_adv = shifted(x, best_delta);
  return {std::move(x_adv), Tensor(x.shape(), std::move(best_delta)), std::move(best_loss), queries};
}

AttackResult run_attack(const Mlp& model, const Tensor& x, std::span<const int> labels,
                        const AttackSpec& spec) {
  switch (spec.family) {
    case AttackFamily::fgsm: return fgsm(model, x, labels, spec);
    case AttackFamily::fgsm_rs: return fgsm_rs(model, x, labels, spec);
    case AttackFamily::n_fgsm: return n_fgsm(model, x, labels, spec);
    case AttackFamily::pgd: return pgd(model, x, labels, spec);
  }
  throw ContractError("unknown attack family");
}

double accuracy(const Mlp& model, const Dataset& data) {
  data.validate();
  auto pred = predict(model, data.x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double evaluate_robust_accuracy(const Mlp& model, const Dataset& data, const AttackSpec& spec,
                                std::size_t chunk) {
  if (data.size() == 0) throw ContractError("robust accuracy of an empty dataset");
  data.validate();
  if (chunk == 0) throw ContractError("chunk size must be >= 1");
  Mlp net = model.frozen();
  std::size_t hits = 0;
  std::size_t part = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk, ++part) {
    std::size_t end = std::min(data.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Dataset piece = data.subset(idx);
    AttackSpec s = spec;
    s.seed = derive_seed(spec.seed, part);
    AttackResult r = run_attack(net, piece.x, piece.y, s);
    auto pred = predict(net, r.x_adv);
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == piece.y[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace robustkit
