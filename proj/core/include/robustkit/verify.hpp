#pragma once

// Randomized runtime checks of the loss machinery with fixed seeds.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace robustkit::verify {

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::size_t checks = 0;
  std::string detail;          // summary statistic, e.g. the worst error seen
  std::string counterexample;  // first failing case, empty on success
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 0x5eed;
  std::size_t bound_cases = 10000;
  std::size_t gradient_cases = 1000;
  std::size_t hessian_cases = 200;
  std::size_t norm_cases = 10000;
  std::size_t convexity_cases = 100000;
  std::size_t chain_rule_trials = 100;
  // Test hook: the bound check uses this coefficient instead of 1/4.
  double qub_coefficient = 0.25;
};

PropertyResult check_upper_bound(const VerifyOptions& options);
PropertyResult check_logit_gradient(const VerifyOptions& options);
PropertyResult check_logit_hessian(const VerifyOptions& options);
PropertyResult check_hessian_norm(const VerifyOptions& options);
PropertyResult check_convexity(const VerifyOptions& options);
PropertyResult check_chain_rule_scaling(const VerifyOptions& options);
PropertyResult check_blend_affine(const VerifyOptions& options);

std::vector<PropertyResult> run_property_suite(const VerifyOptions& options = {});

// Largest |eigenvalue| of a symmetric matrix by power iteration.
double spectral_norm_symmetric(std::span<const double> m, std::size_t n, std::uint64_t seed,
                               int max_iters = 1000, double tol = 1e-14);

}  // namespace robustkit::verify
