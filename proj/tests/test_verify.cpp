#include <doctest.h>

#include "oracles.hpp"
#include "robustkit/verify.hpp"

using namespace robustkit::verify;

TEST_SUITE("verify") {

TEST_CASE("every property holds") {
  auto results = run_property_suite();
  CHECK(results.size() == 7);
  for (const auto& r : results) {
    INFO(r.name << ": " << r.detail << " " << r.counterexample);
    CHECK(r.passed);
    CHECK(r.checks > 0);
    CHECK(r.counterexample.empty());
  }
}

TEST_CASE("bound check covers the configured number of cases") {
  VerifyOptions opt;
  auto r = check_upper_bound(opt);
  CHECK(r.checks == 10000);
  CHECK(r.passed);
}

TEST_CASE("a smaller curvature coefficient is caught") {
  VerifyOptions opt;
  opt.qub_coefficient = 0.2;
  auto r = check_upper_bound(opt);
  CHECK_FALSE(r.passed);
  CHECK_FALSE(r.counterexample.empty());
}

TEST_CASE("spectral norm agrees with dense power iteration") {
  std::vector<double> m{4.0, 1.0, 0.0, 1.0, -5.0, 2.0, 0.0, 2.0, 1.0};
  double mine = spectral_norm_symmetric(m, 3, 1);
  // The oracle returns the Rayleigh quotient of the dominant eigenvector.
  CHECK(mine == doctest::Approx(std::abs(oracle::power_iteration(m, 3))).epsilon(1e-9));
}

}
