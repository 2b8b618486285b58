#pragma once

// Flatness and sparsity diagnostics around inputs: 2-D loss landscapes, the
// dominant eigenvalue of the input Hessian of the cross-entropy, and the
// distance to the nearest misclassified point inside an L-infinity ball.

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "robustkit/data.hpp"
#include "robustkit/model.hpp"

namespace robustkit::analysis {

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct LandscapeGrid {
  std::size_t resolution = 0;
  double eps = 0.0;
  std::vector<double> d_g;  // sign of the input gradient
  std::vector<double> d_r;  // Rademacher
  std::vector<double> values;         // i-major, resolution^2
  std::vector<std::uint8_t> correct;  // argmax == label, same layout
  bool zero_gradient = false;

  double offset(std::size_t i) const { return static_cast<double>(i) * eps / static_cast<double>(resolution - 1); }
  double value(std::size_t i, std::size_t j) const { return values.at(i * resolution + j); }
  bool is_correct(std::size_t i, std::size_t j) const { return correct.at(i * resolution + j) != 0; }
};

// values[i][j] = CE(f(x + offset(i) d_g + offset(j) d_r), label).
LandscapeGrid landscape(const Mlp& model, std::span<const double> x, int label, double eps,
                        std::size_t resolution = 50, std::uint64_t seed = 0);
// Header "i,j,offset_g,offset_r,loss,correct", then resolution^2 rows.
void write_landscape_csv(std::ostream& out, const LandscapeGrid& grid);

struct PowerIterationOptions {
  int max_iters = 100;
  double tol = 1e-6;
  double fd_step = 1e-4;
  std::uint64_t seed = 0;
};

struct EigenEstimate {
  double lambda = 0.0;    // Rayleigh quotient at the final vector (signed)
  double residual = 0.0;  // ||Hv - lambda v|| for unit v
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // Hessian-vector product vanished
  int rayleigh_drops = 0;   // iterations where the quotient fell by more than 1e-6
};

// Gradient of a scalar function at a point.
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// Power iteration with Hessian-vector products from central differences of
// `gradient`: Hv = (g(x + h v) - g(x - h v)) / 2h, h = fd_step / ||v||.
// Converged when the residual is at most tol * max(1, |lambda|).
EigenEstimate dominant_hessian_eigenvalue(const GradientFn& gradient, std::span<const double> x,
                                          const PowerIterationOptions& options);
// Same on the input Hessian of CE(f(x), label).
EigenEstimate dominant_input_eigenvalue(const Mlp& model, std::span<const double> x, int label,
                                        const PowerIterationOptions& options);
// Central-difference Hessian-vector product used by the power iteration.
std::vector<double> hessian_vector_product(const GradientFn& gradient, std::span<const double> x,
                                           std::span<const double> v, double fd_step);

struct EigenReport {
  std::vector<double> estimates;
  std::vector<double> residuals;
  std::vector<int> iterations;
  std::vector<bool> converged;
  std::vector<bool> degenerate;
  double mean = 0.0;  // over converged samples
  std::size_t n_converged = 0;
  std::size_t n_negative = 0;
};

// First n_samples of the dataset in order; per-sample seeds derive from
// options.seed and the sample index.
EigenReport mean_dominant_eigenvalue(const Mlp& model, const Dataset& data, std::size_t n_samples,
                                     const PowerIterationOptions& options);
void write_eigen_json(std::ostream& out, const EigenReport& report, const ConfigEcho& config);

struct SparsityOptions {
  std::size_t directions = 8;
  int line_search_iters = 20;
  std::uint64_t seed = 0;
  int pgd_steps = 10;
  // 0 means the whole dataset.
  std::size_t max_samples = 0;
};

struct SparsityReport {
  double eps = 0.0;
  // Per sample: distance in L-infinity units, NaN when unattackable.
  std::vector<double> distances;
  std::size_t n_misclassified = 0;
  std::size_t n_attackable = 0;  // includes the misclassified samples
  std::size_t n_unattackable = 0;
  double mean = 0.0;  // over attackable samples; NaN if there are none
  bool mean_defined = false;
};

// For each sample: 0 if misclassified; otherwise the smallest s * eps found
// by bisection along candidate rays (one PGD direction plus Rademacher
// directions, each scaled to L-infinity norm eps) at which the prediction
// changes; unattackable if no ray flips the label at s = 1.
SparsityReport sparsity(const Mlp& model, const Dataset& data, double eps,
                        const SparsityOptions& options);
std::vector<SparsityReport> sparsity_sweep(const Mlp& model, const Dataset& data,
                                           std::span<const double> eps_list,
                                           const SparsityOptions& options);
void write_sparsity_json(std::ostream& out, std::span<const SparsityReport> reports,
                         const ConfigEcho& config);

}  // namespace robustkit::analysis
