#include <benchmark/benchmark.h>

#include "robustkit/analysis.hpp"
#include "robustkit/attack.hpp"
#include "robustkit/data.hpp"
#include "robustkit/random.hpp"
#include "robustkit/train.hpp"

using namespace robustkit;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::matrix(r, c, std::move(v));
}

const Dataset& spirals() {
  static const Dataset d = gen_spirals(512, 1.0, 0.03, 1);
  return d;
}

Mlp net() { return Mlp({{2, 64, 64, 2}, Activation::relu, 2}); }

Dataset first(std::size_t n) { return spirals().head(n); }

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_ForwardBackward(benchmark::State& state) {
  Mlp m = net();
  m.set_requires_grad(true);
  Dataset b = first(static_cast<std::size_t>(state.range(0)));
  Tensor zero = Tensor::zeros(b.x.shape());
  for (auto _ : state) {
    Tensor l = batch_loss(m, b.x, b.y, zero, LossMode::clean, 0.0);
    backward(l);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(128)->Arg(512);

// Training step cost of each loss on a fixed perturbation (attack excluded).
static void BM_BatchLoss(benchmark::State& state) {
  auto mode = static_cast<LossMode>(state.range(0));
  Mlp m = net();
  m.set_requires_grad(true);
  Dataset b = first(128);
  Tensor delta = pgd(m, b.x, b.y, AttackSpec::pgd_preset(10, 1, 0.1, 0.025)).delta;
  for (auto _ : state) {
    Tensor l = batch_loss(m, b.x, b.y, delta, mode, 0.5);
    backward(l);
  }
  state.SetLabel(to_string(mode));
}
BENCHMARK(BM_BatchLoss)
    ->Arg(static_cast<int>(LossMode::at))
    ->Arg(static_cast<int>(LossMode::qub_static))
    ->Arg(static_cast<int>(LossMode::qub_decreasing));

static void BM_Attack(benchmark::State& state) {
  Mlp m = net();
  Dataset b = first(128);
  AttackSpec spec = AttackSpec::pgd_preset(static_cast<int>(state.range(0)), 1, 0.1, 0.025);
  if (state.range(0) == 1) {
    spec = AttackSpec{};
    spec.family = AttackFamily::fgsm;
    spec.epsilon = 0.1;
  }
  for (auto _ : state) benchmark::DoNotOptimize(run_attack(m, b.x, b.y, spec));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Attack)->Arg(1)->Arg(10)->Arg(20);

static void BM_TrainEpoch(benchmark::State& state) {
  auto mode = static_cast<LossMode>(state.range(0));
  TrainPlan plan;
  plan.epochs = 1;
  plan.loss_mode = mode;
  plan.attack = AttackSpec::pgd_preset(10, 1, 0.1, 0.025);
  plan.val_fraction = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(train(net(), spirals(), plan));
  state.SetLabel(to_string(mode));
}
BENCHMARK(BM_TrainEpoch)
    ->Arg(static_cast<int>(LossMode::clean))
    ->Arg(static_cast<int>(LossMode::at))
    ->Arg(static_cast<int>(LossMode::qub_static))
    ->Unit(benchmark::kMillisecond);

static void BM_DominantEigenvalue(benchmark::State& state) {
  Mlp m = net();
  std::vector<double> x(spirals().sample(0).begin(), spirals().sample(0).end());
  analysis::PowerIterationOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(analysis::dominant_input_eigenvalue(m, x, spirals().y[0], opt));
}
BENCHMARK(BM_DominantEigenvalue);

static void BM_Sparsity(benchmark::State& state) {
  Mlp m = net();
  Dataset d = first(64);
  for (auto _ : state) benchmark::DoNotOptimize(analysis::sparsity(m, d, 0.1, {}));
}
BENCHMARK(BM_Sparsity)->Unit(benchmark::kMillisecond);

static void BM_Landscape(benchmark::State& state) {
  Mlp m = net();
  std::vector<double> x(spirals().sample(0).begin(), spirals().sample(0).end());
  for (auto _ : state) benchmark::DoNotOptimize(analysis::landscape(m, x, spirals().y[0], 0.1, 50, 0));
}
BENCHMARK(BM_Landscape)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
