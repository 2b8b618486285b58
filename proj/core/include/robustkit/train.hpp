#pragma once

// Outer minimization: clean training, adversarial training on CE(f(x+delta)),
// training on the quadratic upper bound (static), and the linear blend from
// the bound toward the adversarial loss (decreasing, lambda_t = t / T).

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "robustkit/attack.hpp"
#include "robustkit/data.hpp"
#include "robustkit/model.hpp"

namespace robustkit {

enum class LossMode { clean, at, qub_static, qub_decreasing };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& name);

struct LrMilestone {
  int epoch;
  double factor;
};

struct EarlyStop {
  bool enabled = false;
  int pgd_steps = 10;
  int every_n_epochs = 1;
};

struct TrainPlan {
  int epochs = 100;
  std::size_t batch_size = 128;
  LossMode loss_mode = LossMode::at;
  AttackSpec attack;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<LrMilestone> lr_milestones{{70, 0.1}, {85, 0.1}};
  EarlyStop early_stop;
  std::uint64_t seed = 0;
  // Held-out share of the training data used for per-epoch validation.
  double val_fraction = 0.1;
  // When false, EpochRecord::wall_seconds is written as 0 so logs are
  // byte-reproducible.
  bool record_wall_time = false;  // off keeps epochs.jsonl byte-reproducible

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lambda_t = 0.0;
  double mean_train_loss = 0.0;
  std::optional<double> clean_val_acc;
  std::optional<double> robust_val_acc;
  double wall_seconds = 0.0;
};

// One JSON object, keys in fixed order, no trailing newline.
std::string to_jsonl(const EpochRecord& record);
void write_jsonl(std::ostream& out, std::span<const EpochRecord> records);

double lambda_schedule(int t, int total_epochs);
double lr_at(int epoch, const TrainPlan& plan);

struct SgdState {
  std::vector<std::vector<double>> velocity;
};

// v <- momentum v + (g + weight_decay theta); theta <- theta - lr v.
void sgd_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
              SgdState& state, double lr, double momentum, double weight_decay);
void sgd_step(std::span<Tensor> params, SgdState& state, double lr, double momentum,
              double weight_decay);

// Produces delta for a batch from a frozen snapshot of the model.
using Perturber = std::function<Tensor(const Mlp& snapshot, const Tensor& x,
                                       std::span<const int> labels, std::uint64_t seed)>;
Perturber attack_perturber(const AttackSpec& spec);

// Mean per-sample loss of one batch under the given mode. `delta` is ignored
// in clean mode. The result is on the tape whenever the model's parameters
// require gradients.
Tensor batch_loss(const Mlp& model, const Tensor& x, std::span<const int> labels,
                  const Tensor& delta, LossMode mode, double lambda);

struct BatchEvent {
  int epoch;
  std::size_t batch;
  double loss;
};

struct TrainOptions {
  // Overrides the attack in the plan.
  Perturber perturber;
  std::function<void(const BatchEvent&)> on_batch;
};

struct TrainResult {
  Mlp model;
  std::vector<EpochRecord> records;
  // Epoch whose parameters were returned.
  int selected_epoch = 0;
};

TrainResult train(Mlp model, const Dataset& data, const TrainPlan& plan,
                  const TrainOptions& options = {});

}  // namespace robustkit
