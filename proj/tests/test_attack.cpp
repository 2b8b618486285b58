#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "robustkit/attack.hpp"
#include "robustkit/data.hpp"
#include "robustkit/error.hpp"
#include "robustkit/loss.hpp"
#include "robustkit/random.hpp"
#include "robustkit/train.hpp"
#include "test_util.hpp"

using namespace robustkit;
using testutil::to_vec;

namespace {

Tensor random_inputs(Rng& rng, std::size_t n, std::size_t d, double scale = 1.0) {
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor::matrix(n, d, v);
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t c) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(c));
  return y;
}

double linf_row(std::span<const double> d, std::size_t i, std::size_t cols) {
  double m = 0.0;
  for (std::size_t j = 0; j < cols; ++j) m = std::max(m, std::abs(d[i * cols + j]));
  return m;
}

Mlp trained_gaussian_model(const Dataset& data) {
  TrainPlan plan;
  plan.epochs = 15;
  plan.loss_mode = LossMode::clean;
  plan.lr = 0.05;
  plan.lr_milestones.clear();
  plan.val_fraction = 0.0;
  return train(Mlp({{2, 16, 2}, Activation::relu, 1}), data, plan).model;
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("projection") {
  Tensor d = Tensor::vector({0.15, -0.05});
  CHECK(to_vec(project_linf(d, 0.1).values()) == std::vector<double>{0.1, -0.05});
  Tensor feasible = Tensor::vector({0.01, -0.09, 0.1});
  CHECK(to_vec(project_linf(feasible, 0.1).values()) == to_vec(feasible.values()));
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    Tensor r = random_inputs(rng, 1, 6, 0.5);
    Tensor once = project_linf(r, 0.2);
    CHECK(to_vec(project_linf(once, 0.2).values()) == to_vec(once.values()));
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(once.at(j)) <= std::abs(r.at(j)));
  }
}

TEST_CASE("sign convention") {
  CHECK(sign(0.3) == 1.0);
  CHECK(sign(-0.2) == -1.0);
  CHECK(sign(0.0) == 0.0);
}

TEST_CASE("fgsm steps by epsilon times the gradient sign") {
  // Third input column has zero weight, so its gradient is exactly zero.
  Mlp lin = testutil::linear_model(2, 3, {1.0, -2.0, 0.0, -0.5, 1.0, 0.0}, {0.0, 0.1});
  Tensor x = Tensor::matrix(1, 3, {0.2, 0.4, -0.3});
  std::vector<int> y{0};
  auto g = input_gradient(lin, x, y);
  auto fd = oracle::central_gradient(
      [&](const std::vector<double>& v) { return oracle::softmax_ce(lin.logits(v), 0); }, to_vec(x.values()));
  CHECK(oracle::rel_error(to_vec(g.grad.values()), fd) < 1e-7);

  AttackSpec spec;
  spec.family = AttackFamily::fgsm;
  spec.epsilon = 0.1;
  auto r = fgsm(lin, x, y, spec);
  CHECK(r.queries == 1);
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.delta.at(j) == 0.1 * sign(g.grad.at(j)));
  CHECK(r.delta.at(2) == 0.0);

  spec.epsilon = 0.0;
  CHECK(to_vec(fgsm(lin, x, y, spec).x_adv.values()) == to_vec(x.values()));
}

TEST_CASE("fgsm does not decrease the loss of a linear model") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> w(3 * 4), b(3);
    for (double& v : w) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);
    Mlp lin = testutil::linear_model(3, 4, w, b);
    Tensor x = random_inputs(rng, 1, 4);
    std::vector<int> y = random_labels(rng, 1, 3);
    AttackSpec spec;
    spec.family = AttackFamily::fgsm;
    spec.epsilon = 0.05;
    auto r = fgsm(lin, x, y, spec);
    CHECK(r.final_loss[0] >= per_sample_loss(lin, x, y)[0]);
  }
}

TEST_CASE("fgsm_rs feasibility, degeneracy and determinism") {
  Mlp m({{4, 8, 3}, Activation::relu, 3});
  Rng rng(3);
  Tensor x = random_inputs(rng, 10000, 4);
  auto y = random_labels(rng, 10000, 3);
  AttackSpec spec;
  spec.family = AttackFamily::fgsm_rs;
  spec.epsilon = 0.1;
  spec.seed = 17;
  auto r = fgsm_rs(m, x, y, spec);
  CHECK(r.queries == 1);
  for (std::size_t i = 0; i < 10000; ++i) CHECK(linf_row(r.delta.values(), i, 4) <= 0.1 + 1e-12);
  CHECK(to_vec(fgsm_rs(m, x, y, spec).delta.values()) == to_vec(r.delta.values()));

  spec.epsilon = 0.0;
  Tensor small = random_inputs(rng, 5, 4);
  auto ys = random_labels(rng, 5, 3);
  CHECK(to_vec(fgsm_rs(m, small, ys, spec).x_adv.values()) == to_vec(small.values()));
}

TEST_CASE("n_fgsm skips projection but respects its own bound") {
  Mlp m({{4, 8, 3}, Activation::relu, 4});
  Rng rng(4);
  Tensor x = random_inputs(rng, 10000, 4);
  auto y = random_labels(rng, 10000, 3);
  AttackSpec spec;
  spec.family = AttackFamily::n_fgsm;
  spec.epsilon = 0.1;
  spec.noise_scale = 2.0;
  spec.seed = 5;
  auto r = n_fgsm(m, x, y, spec);
  bool exceeded_eps = false;
  for (std::size_t i = 0; i < 10000; ++i) {
    double n = linf_row(r.delta.values(), i, 4);
    CHECK(n <= 2.0 * 0.1 + 0.1 + 1e-12);
    exceeded_eps = exceeded_eps || n > 0.1 + 1e-9;
  }
  CHECK(exceeded_eps);
  CHECK(to_vec(n_fgsm(m, x, y, spec).delta.values()) == to_vec(r.delta.values()));

  spec.noise_scale = 0.0;
  AttackSpec plain;
  plain.family = AttackFamily::fgsm;
  plain.epsilon = 0.1;
  Tensor few = random_inputs(rng, 20, 4);
  auto yf = random_labels(rng, 20, 3);
  CHECK(to_vec(n_fgsm(m, few, yf, spec).x_adv.values()) == to_vec(fgsm(m, few, yf, plain).x_adv.values()));
}

TEST_CASE("pgd reduction, feasibility, queries and restart bookkeeping") {
  Mlp m({{4, 8, 3}, Activation::relu, 6});
  Rng rng(6);
  Tensor x = random_inputs(rng, 50, 4);
  auto y = random_labels(rng, 50, 3);

  AttackSpec one = AttackSpec::pgd_preset(1, 1, 0.1, 0.03);
  one.random_start = false;
  AttackSpec f;
  f.family = AttackFamily::fgsm;
  f.epsilon = 0.03;
  auto p = pgd(m, x, y, one);
  auto q = fgsm(m, x, y, f);
  CHECK(to_vec(p.delta.values()) == to_vec(project_linf(q.delta, 0.1).values()));

  AttackSpec many = AttackSpec::pgd_preset(7, 3, 0.1, 0.025);
  many.seed = 9;
  auto r = pgd(m, x, y, many);
  CHECK(r.queries == 21);
  for (std::size_t i = 0; i < 50; ++i) CHECK(linf_row(r.delta.values(), i, 4) <= 0.1 + 1e-12);
  auto check_loss = per_sample_loss(m, r.x_adv, y);
  CHECK(check_loss == r.final_loss);

  AttackSpec first = many;
  first.restarts = 1;
  auto single = pgd(m, x, y, first);
  for (std::size_t i = 0; i < 50; ++i) CHECK(r.final_loss[i] >= single.final_loss[i]);
}

TEST_CASE("pgd respects the clip box") {
  Mlp m({{4, 8, 3}, Activation::relu, 7});
  Rng rng(7);
  std::vector<double> v(40 * 4);
  for (double& t : v) t = rng.uniform(0, 1);
  Tensor x = Tensor::matrix(40, 4, v);
  auto y = random_labels(rng, 40, 3);
  AttackSpec spec = AttackSpec::pgd_preset(5, 2, 0.2, 0.05);
  spec.clip_input = FeatureBox{0.0, 1.0};
  auto r = pgd(m, x, y, spec);
  for (double t : r.x_adv.values()) CHECK((t >= 0.0 && t <= 1.0));
}

TEST_CASE("pgd finds at least as much loss as fgsm on a trained model") {
  Dataset data = gen_two_gaussians(1000, 2.0, 1.0, 1);
  Mlp m = trained_gaussian_model(data);
  Dataset batch = data.head(500);
  AttackSpec f;
  f.family = AttackFamily::fgsm;
  f.epsilon = 0.3;
  AttackSpec p = AttackSpec::pgd_preset(20, 1, 0.3, 0.3 / 4);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  CHECK(mean(pgd(m, batch.x, batch.y, p).final_loss) >= mean(fgsm(m, batch.x, batch.y, f).final_loss));
}

TEST_CASE("robust accuracy") {
  Dataset data = gen_two_gaussians(400, 3.0, 1.0, 2);
  Mlp m = trained_gaussian_model(data);
  AttackSpec spec = AttackSpec::pgd_preset(10, 1, 0.0, 0.01);
  CHECK(evaluate_robust_accuracy(m, data, spec) == accuracy(m, data));

  Mlp zero = testutil::zero_model({2, 4, 2});
  spec.epsilon = 0.5;
  spec.alpha = 0.1;
  CHECK(evaluate_robust_accuracy(zero, data, spec) == 0.5);

  double prev = 1.0;
  for (double e : {2.0, 4.0, 8.0, 16.0}) {
    AttackSpec s = AttackSpec::pgd_preset(10, 1, e / 255.0 * 20, e / 255.0 * 5);
    double ra = evaluate_robust_accuracy(m, data, s);
    CHECK(ra <= prev);
    prev = ra;
  }
  CHECK_THROWS_AS(evaluate_robust_accuracy(m, data.head(0), spec), ContractError);
}

TEST_CASE("presets and names") {
  AttackSpec base;
  base.epsilon = 8.0 / 255.0;
  auto p = resolve_attack_preset("pgd50-10", base);
  CHECK(p.family == AttackFamily::pgd);
  CHECK(p.steps == 50);
  CHECK(p.restarts == 10);
  CHECK(p.step_size() == doctest::Approx(2.0 / 255.0));
  CHECK(resolve_attack_preset("pgd20", base).steps == 20);
  CHECK_THROWS_AS(resolve_attack_preset("pgd7", base), ConfigError);
  CHECK(parse_attack_family("n_fgsm") == AttackFamily::n_fgsm);
  CHECK_THROWS_AS(parse_attack_family("cw"), ConfigError);
  AttackSpec rs;
  rs.family = AttackFamily::fgsm_rs;
  rs.epsilon = 0.1;
  CHECK(rs.step_size() == doctest::Approx(0.125));
}

}
