#pragma once

// L-infinity perturbation generators: FGSM, FGSM with a random start,
// N-FGSM (large noise, no projection) and PGD with restarts.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustkit/data.hpp"
#include "robustkit/model.hpp"

namespace robustkit {

enum class AttackFamily { fgsm, fgsm_rs, n_fgsm, pgd };

std::string to_string(AttackFamily family);
AttackFamily parse_attack_family(const std::string& name);

struct AttackSpec {
  AttackFamily family = AttackFamily::pgd;
  double epsilon = 8.0 / 255.0;
  // Unset means the family default: fgsm eps, fgsm_rs 1.25 eps, n_fgsm eps,
  // pgd eps / 4.
  std::optional<double> alpha;
  int steps = 10;
  int restarts = 1;
  double noise_scale = 2.0;  // n_fgsm only
  std::optional<FeatureBox> clip_input;
  bool random_start = true;  // pgd only
  std::uint64_t seed = 0;

  double step_size() const;
  // Steps actually taken: 1 for the single-step families.
  int effective_steps() const;
  void validate() const;

  // Evaluation presets: PGD with 10 / 20 steps, and 50 steps x 10 restarts.
  static AttackSpec pgd_preset(int steps, int restarts, double epsilon, double alpha);
};

// Named preset ("pgd10", "pgd20", "pgd50-10", "fgsm") over a base spec that
// supplies epsilon, alpha, clipping and seed.
AttackSpec resolve_attack_preset(const std::string& name, const AttackSpec& base);

struct AttackResult {
  Tensor x_adv;                    // [B x d]
  Tensor delta;                    // x_adv - x
  std::vector<double> final_loss;  // CE at x_adv per sample
  // Batched gradient passes; each covers every sample once.
  std::size_t queries = 0;
};

// Clamps every coordinate to [-eps, eps].
Tensor project_linf(const Tensor& delta, double epsilon);

struct InputGradient {
  std::vector<double> loss;  // per sample
  Tensor grad;               // d CE_i / d x_i, [B x d]
};
InputGradient input_gradient(const Mlp& model, const Tensor& x, std::span<const int> labels);
std::vector<double> per_sample_loss(const Mlp& model, const Tensor& x, std::span<const int> labels);

double sign(double v);

AttackResult fgsm(const Mlp& model, const Tensor& x, std::span<const int> labels,
                  const AttackSpec& spec);
AttackResult fgsm_rs(const Mlp& model, const Tensor& x, std::span<const int> labels,
                     const AttackSpec& spec);
AttackResult n_fgsm(const Mlp& model, const Tensor& x, std::span<const int> labels,
                    const AttackSpec& spec);
AttackResult pgd(const Mlp& model, const Tensor& x, std::span<const int> labels,
                 const AttackSpec& spec);
// Dispatches on spec.family.
AttackResult run_attack(const Mlp& model, const Tensor& x, std::span<const int> labels,
                        const AttackSpec& spec);

double accuracy(const Mlp& model, const Dataset& data);
// Fraction of samples still classified correctly after the attack. Chunks of
// `chunk` samples are attacked with seeds derived from spec.seed.
double evaluate_robust_accuracy(const Mlp& model, const Dataset& data, const AttackSpec& spec,
                                std::size_t chunk = 256);

}  // namespace robustkit
