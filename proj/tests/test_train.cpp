#include <doctest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robustkit/attack.hpp"
#include "robustkit/data.hpp"
#include "robustkit/error.hpp"
#include "robustkit/random.hpp"
#include "robustkit/train.hpp"
#include "test_util.hpp"

using namespace robustkit;
using testutil::to_vec;

namespace {

TrainPlan small_plan(LossMode mode, int epochs) {
  TrainPlan p;
  p.epochs = epochs;
  p.batch_size = 32;
  p.loss_mode = mode;
  p.lr = 0.05;
  p.lr_milestones.clear();
  p.attack.family = AttackFamily::pgd;
  p.attack.epsilon = 0.2;
  p.attack.steps = 3;
  p.seed = 4;
  return p;
}

Perturber zero_perturber() {
  return [](const Mlp&, const Tensor& x, std::span<const int>, std::uint64_t) { return Tensor::zeros(x.shape()); };
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("lambda schedule") {
  CHECK(lambda_schedule(50, 100) == 0.5);
  CHECK(lambda_schedule(100, 100) == 1.0);
  CHECK(lambda_schedule(1, 100) == 0.01);
  CHECK_THROWS_AS(lambda_schedule(0, 100), ContractError);
  CHECK_THROWS_AS(lambda_schedule(101, 100), ContractError);
}

TEST_CASE("learning-rate milestones") {
  TrainPlan p;
  p.lr = 0.1;
  p.lr_milestones = {{70, 0.1}, {85, 0.1}};
  CHECK(lr_at(69, p) == 0.1);
  CHECK(lr_at(70, p) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_at(85, p) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(lr_at(100, p) == doctest::Approx(0.001).epsilon(1e-15));
  p.lr_milestones.clear();
  CHECK(lr_at(1, p) == 0.1);
  CHECK(lr_at(500, p) == 0.1);
}

TEST_CASE("sgd step") {
  std::vector<Tensor> params{Tensor::vector({1.0, -2.0})};
  std::vector<std::vector<double>> g{{0.5, 0.25}};
  SgdState s;
  sgd_step(params, g, s, 0.1, 0.0, 0.0);
  CHECK(to_vec(params[0].values()) == std::vector<double>{1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25});

  std::vector<Tensor> still{Tensor::vector({3.0})};
  SgdState s2;
  std::vector<std::vector<double>> zero{{0.0}};
  sgd_step(still, zero, s2, 0.1, 0.9, 0.0);
  CHECK(still[0].at(0) == 3.0);

  // Two momentum steps on a constant gradient: theta0 - lr g (1 + 1.9).
  std::vector<Tensor> th{Tensor::vector({1.0})};
  SgdState s3;
  std::vector<std::vector<double>> cg{{2.0}};
  sgd_step(th, cg, s3, 0.01, 0.9, 0.0);
  sgd_step(th, cg, s3, 0.01, 0.9, 0.0);
  CHECK(th[0].at(0) == doctest::Approx(1.0 - 0.01 * 2.0 * 2.9).epsilon(1e-14));

  // Weight decay is folded into the gradient.
  std::vector<Tensor> wd{Tensor::vector({2.0})};
  SgdState s4;
  sgd_step(wd, zero, s4, 0.1, 0.0, 0.5);
  CHECK(wd[0].at(0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));

  std::vector<Tensor> bad{Tensor::vector({1.0})};
  SgdState s5;
  std::vector<std::vector<double>> huge{{1e308}};
  CHECK_THROWS_AS(sgd_step(bad, huge, s5, 1e10, 0.0, 0.0), NumericError);
}

TEST_CASE("plan validation") {
  TrainPlan p;
  CHECK_NOTHROW(p.validate());
  p.epochs = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = TrainPlan{};
  p.lr_milestones = {{10, 0.1}, {10, 0.1}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = TrainPlan{};
  p.lr = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  try {
    parse_loss_mode("trades");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "loss_mode");
  }
}

TEST_CASE("blend at the final epoch equals the adversarial loss bit for bit") {
  Dataset data = gen_spirals(200, 1.0, 0.05, 3);
  Mlp m({{2, 16, 16, 2}, Activation::relu, 8});
  AttackSpec spec = AttackSpec::pgd_preset(5, 1, 0.1, 0.03);
  auto delta = pgd(m, data.x, data.y, spec).delta;
  const int T = 7;
  Mlp a = m, b = m;
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tensor la = batch_loss(a, data.x, data.y, delta, LossMode::qub_decreasing, lambda_schedule(T, T));
  Tensor lb = batch_loss(b, data.x, data.y, delta, LossMode::at, 0.0);
  CHECK(la.item() == lb.item());
  backward(la);
  backward(lb);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(to_vec(pa[k].grad()) == to_vec(pb[k].grad()));
}

TEST_CASE("one-epoch qub_decreasing is pure adversarial training") {
  Dataset data = gen_spirals(300, 1.0, 0.05, 4);
  Mlp init({{2, 16, 2}, Activation::relu, 2});
  auto a = train(init, data, small_plan(LossMode::qub_decreasing, 1));
  auto b = train(init, data, small_plan(LossMode::at, 1));
  CHECK(a.model.same_parameters(b.model));
  CHECK(a.records[0].lambda_t == 1.0);
  CHECK(a.records[0].mean_train_loss == b.records[0].mean_train_loss);
}

TEST_CASE("qub with a zero perturbation reproduces clean training") {
  Dataset data = gen_two_gaussians(400, 3.0, 1.0, 5);
  Mlp init({{2, 16, 16, 2}, Activation::relu, 3});
  TrainOptions zero{zero_perturber(), {}};
  auto q = train(init, data, small_plan(LossMode::qub_static, 5), zero);
  auto c = train(init, data, small_plan(LossMode::clean, 5));
  CHECK(q.model.same_parameters(c.model));
  for (std::size_t e = 0; e < 5; ++e) CHECK(q.records[e].mean_train_loss == c.records[e].mean_train_loss);
}

TEST_CASE("clean training on two gaussians") {
  // Separation 4 sigma: the Bayes rule only reaches Phi(2) ~ 0.977.
  Dataset near = gen_two_gaussians(2000, 4.0, 1.0, 6);
  Dataset near_test = gen_two_gaussians(2000, 4.0, 1.0, 7);
  TrainPlan p = small_plan(LossMode::clean, 30);
  p.val_fraction = 0.0;
  auto r = train(Mlp({{2, 32, 2}, Activation::relu, 1}), near, p);
  CHECK(accuracy(r.model, near_test) >= 0.977 - 0.02);

  Dataset far = gen_two_gaussians(2000, 8.0, 1.0, 6);
  auto r2 = train(Mlp({{2, 32, 2}, Activation::relu, 1}), far, p);
  CHECK(accuracy(r2.model, far) >= 0.99);
}

TEST_CASE("training is deterministic") {
  Dataset data = gen_spirals(200, 1.0, 0.05, 9);
  Mlp init({{2, 8, 2}, Activation::relu, 9});
  TrainPlan p = small_plan(LossMode::qub_static, 3);
  auto a = train(init, data, p), b = train(init, data, p);
  CHECK(a.model.same_parameters(b.model));
  std::ostringstream ja, jb;
  write_jsonl(ja, a.records);
  write_jsonl(jb, b.records);
  CHECK(ja.str() == jb.str());
}

TEST_CASE("epoch records serialize with exactly the documented keys") {
  EpochRecord r;
  r.epoch = 3;
  r.lambda_t = 0.25;
  r.mean_train_loss = 0.5;
  r.clean_val_acc = 0.75;
  auto j = nlohmann::json::parse(to_jsonl(r));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end());
  CHECK(keys == std::vector<std::string>{"clean_val_acc", "epoch", "lambda_t", "mean_train_loss",
                                         "robust_val_acc", "wall_seconds"});
  CHECK(j["robust_val_acc"].is_null());
  CHECK(to_jsonl(r).find('\n') == std::string::npos);
}

TEST_CASE("linear model loss settles on separable data") {
  Dataset data = gen_two_gaussians(400, 8.0, 1.0, 10);
  TrainPlan p = small_plan(LossMode::clean, 12);
  p.lr = 0.01;
  p.weight_decay = 0.0;
  p.val_fraction = 0.0;
  auto r = train(Mlp({{2, 2}, Activation::relu, 0}), data, p);
  for (std::size_t e = 2; e < r.records.size(); ++e) {
    CHECK(r.records[e].mean_train_loss <= r.records[e - 1].mean_train_loss);
  }
}

TEST_CASE("early stopping keeps the best probed epoch") {
  Dataset data = gen_spirals(300, 1.0, 0.05, 11);
  TrainPlan p = small_plan(LossMode::at, 6);
  p.early_stop = EarlyStop{true, 3, 2};
  auto r = train(Mlp({{2, 16, 2}, Activation::relu, 4}), data, p);
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& rec : r.records) {
    bool probed = rec.epoch % 2 == 0;
    CHECK(rec.robust_val_acc.has_value() == probed);
    if (probed && *rec.robust_val_acc > best) {
      best = *rec.robust_val_acc;
      best_epoch = rec.epoch;
    }
  }
  CHECK(r.selected_epoch == best_epoch);
  CHECK(r.records[best_epoch - 1].robust_val_acc == best);
}

TEST_CASE("lambda is recorded only for the decreasing schedule") {
  Dataset data = gen_spirals(100, 1.0, 0.05, 12);
  auto r = train(Mlp({{2, 4, 2}, Activation::relu, 1}), data, small_plan(LossMode::qub_decreasing, 4));
  CHECK(r.records[0].lambda_t == 0.25);
  CHECK(r.records[3].lambda_t == 1.0);
  auto s = train(Mlp({{2, 4, 2}, Activation::relu, 1}), data, small_plan(LossMode::qub_static, 2));
  CHECK(s.records[1].lambda_t == 0.0);
}

TEST_CASE("numeric failures carry epoch and batch coordinates") {
  Dataset data = gen_two_gaussians(100, 4.0, 1.0, 13);
  TrainPlan p = small_plan(LossMode::clean, 3);
  p.lr = 1e300;
  try {
    train(Mlp({{2, 4, 2}, Activation::relu, 1}), data, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1 batch") != std::string::npos);
  }
}

}
