#include "robustkit/train.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robustkit/error.hpp"
#include "robustkit/loss.hpp"
#include "robustkit/random.hpp"

namespace robustkit {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::clean: return "clean";
    case LossMode::at: return "at";
    case LossMode::qub_static: return "qub_static";
    case LossMode::qub_decreasing: return "qub_decreasing";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "clean") return LossMode::clean;
  if (name == "at") return LossMode::at;
  if (name == "qub_static") return LossMode::qub_static;
  if (name == "qub_decreasing") return LossMode::qub_decreasing;
  throw ConfigError("loss_mode", "unknown loss mode '" + name + "'");
}

void TrainPlan::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i].epoch < 1) throw ConfigError("lr_milestones", "epochs must be >= 1");
    if (!(lr_milestones[i].factor > 0.0)) throw ConfigError("lr_milestones", "factors must be > 0");
    if (i > 0 && lr_milestones[i].epoch <= lr_milestones[i - 1].epoch) {
      throw ConfigError("lr_milestones", "epochs must be strictly increasing");
    }
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction", "must lie in [0, 1)");
  }
  if (early_stop.enabled) {
    if (val_fraction <= 0.0) throw ConfigError("early_stop", "needs val_fraction > 0");
    if (early_stop.pgd_steps < 1) throw ConfigError("early_stop_steps", "must be >= 1");
    if (early_stop.every_n_epochs < 1) throw ConfigError("early_stop_every", "must be >= 1");
  }
  if (loss_mode != LossMode::clean) attack.validate();
}

std::string to_jsonl(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lambda_t"] = r.lambda_t;
  j["mean_train_loss"] = r.mean_train_loss;
  j["clean_val_acc"] = r.clean_val_acc ? nlohmann::ordered_json(*r.clean_val_acc) : nlohmann::ordered_json(nullptr);
  j["robust_val_acc"] = r.robust_val_acc ? nlohmann::ordered_json(*r.robust_val_acc) : nlohmann::ordered_json(nullptr);
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

void write_jsonl(std::ostream& out, std::span<const EpochRecord> records) {
  for (const EpochRecord& r : records) out << to_jsonl(r) << '\n';
}

double lambda_schedule(int t, int total_epochs) {
  if (total_epochs < 1 || t < 1 || t > total_epochs) {
    throw ContractError("lambda_schedule: epoch " + std::to_string(t) + " outside [1, " +
                        std::to_string(total_epochs) + "]");
  }
  return static_cast<double>(t) / static_cast<double>(total_epochs);
}

double lr_at(int epoch, const TrainPlan& plan) {
  double lr = plan.lr;
  for (const LrMilestone& m : plan.lr_milestones) {
    if (m.epoch <= epoch) lr *= m.factor;
  }
  return lr;
}

void sgd_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
              SgdState& state, double lr, double momentum, double weight_decay) {
  if (grads.size() != params.size()) throw DimensionError("sgd_step: params vs grads count");
  if (state.velocity.empty()) {
    for (const Tensor& p : params) state.velocity.emplace_back(p.numel(), 0.0);
  }
  if (state.velocity.size() != params.size()) throw DimensionError("sgd_step: state size");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].mutable_values();
    const auto& g = grads[k];
    auto& v = state.velocity[k];
    if (g.size() != theta.size() || v.size() != theta.size()) {
      throw DimensionError("sgd_step: shape mismatch for parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = momentum * v[i] + (g[i] + weight_decay * theta[i]);
      theta[i] -= lr * v[i];
    }
    detail::check_finite("sgd_step", theta);
  }
}

void sgd_step(std::span<Tensor> params, SgdState& state, double lr, double momentum,
              double weight_decay) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.numel(), 0.0);
    }
  }
  sgd_step(params, grads, state, lr, momentum, weight_decay);
}

Perturber attack_perturber(const AttackSpec& spec) {
  return [spec](const Mlp& snapshot, const Tensor& x, std::span<const int> labels,
                std::uint64_t seed) {
    AttackSpec s = spec;
    s.seed = seed;
    return run_attack(snapshot, x, labels, s).delta;
  };
}

Tensor batch_loss(const Mlp& model, const Tensor& x, std::span<const int> labels,
                  const Tensor& delta, LossMode mode, double lambda) {
  auto adversarial = [&] { return model.forward(add(x, delta).detach()); };
  switch (mode) {
    case LossMode::clean:
      return mean(loss::cross_entropy(model.forward(x), labels));
    case LossMode::at:
      return mean(loss::cross_entropy(adversarial(), labels));
    case LossMode::qub_static:
      return mean(loss::qub_loss(model.forward(x), adversarial(), labels));
    case LossMode::qub_decreasing:
      return mean(loss::blended_loss(model.forward(x), adversarial(), labels,
                                     loss::BlendWeight(lambda)));
  }
  throw ContractError("unknown loss mode");
}

TrainResult train(Mlp model, const Dataset& data, const TrainPlan& plan,
                  const TrainOptions& options) {
  plan.validate();
  data.validate();
  if (data.dim() != model.input_width()) {
    throw DimensionError("train: data width " + std::to_string(data.dim()) +
                         " does not match model input width " + std::to_string(model.input_width()));
  }
  if (data.num_classes > model.num_classes()) {
    throw DimensionError("train: data has more classes than the model outputs");
  }

  Dataset train_set = data;
  std::optional<Dataset> val_set;
  if (plan.val_fraction > 0.0) {
    auto [tr, va] = split(data, SplitSpec{1.0 - plan.val_fraction, derive_seed(plan.seed, 0x5e1)});
    train_set = std::move(tr);
    val_set = std::move(va);
  }

  Perturber perturb = options.perturber ? options.perturber : attack_perturber(plan.attack);
  AttackSpec probe = AttackSpec::pgd_preset(plan.early_stop.pgd_steps, 1, plan.attack.epsilon,
                                            plan.attack.step_size());
  probe.clip_input = plan.attack.clip_input;
  probe.seed = derive_seed(plan.seed, 0xe5);

  model.set_requires_grad(true);
  std::vector<Tensor> params = model.parameters();
  SgdState state;
  TrainResult result{model.frozen(), {}, 0};
  std::optional<double> best_robust;

  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    auto started = std::chrono::steady_clock::now();
    double lambda = plan.loss_mode == LossMode::qub_decreasing ? lambda_schedule(epoch, plan.epochs) : 0.0;
    double lr = lr_at(epoch, plan);
    auto order = batch_indices(train_set.size(), plan.batch_size,
                               plan.seed ^ static_cast<std::uint64_t>(epoch));
    double loss_total = 0.0;
    for (std::size_t b = 0; b < order.size(); ++b) {
      Dataset batch = train_set.subset(order[b]);
      double value = 0.0;
      try {
        Tensor delta = Tensor::zeros(batch.x.shape());
        if (plan.loss_mode != LossMode::clean) {
          std::uint64_t seed = derive_seed(derive_seed(plan.attack.seed ^ plan.seed, epoch), b);
          delta = perturb(model.frozen(), batch.x, batch.y, seed);
        }
        Tensor l = batch_loss(model, batch.x, batch.y, delta, plan.loss_mode, lambda);
        value = l.item();
        backward(l);
        sgd_step(params, state, lr, plan.momentum, plan.weight_decay);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                           ": " + e.what());
      }
      if (options.on_batch) options.on_batch(BatchEvent{epoch, b, value});
      loss_total += value * static_cast<double>(batch.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lambda_t = lambda;
    rec.mean_train_loss = loss_total / static_cast<double>(train_set.size());
    if (val_set) rec.clean_val_acc = accuracy(model, *val_set);
    bool probed = plan.early_stop.enabled && epoch % plan.early_stop.every_n_epochs == 0;
    if (probed) rec.robust_val_acc = evaluate_robust_accuracy(model, *val_set, probe);
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started);
    rec.wall_seconds = plan.record_wall_time ? elapsed.count() : 0.0;
    result.records.push_back(rec);

    if (plan.early_stop.enabled) {
      if (probed && (!best_robust || *rec.robust_val_acc > *best_robust)) {
        best_robust = rec.robust_val_acc;
        result.model = model.frozen();
        result.selected_epoch = epoch;
      }
    }
  }
  if (!plan.early_stop.enabled || !best_robust) {
    result.model = model.frozen();
    result.selected_epoch = plan.epochs;
  }
  return result;
}

}  // namespace robustkit
