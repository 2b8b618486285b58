#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "robustkit/error.hpp"
#include "robustkit/loss.hpp"
#include "robustkit/random.hpp"
#include "test_util.hpp"

using namespace robustkit;
using namespace robustkit::loss;
using testutil::to_vec;

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

std::vector<double> hessian_dense(std::span<const double> p) {
  return to_vec(ce_logit_hessian(p).values());
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("cross entropy reference values") {
  CHECK(cross_entropy(std::vector<double>{0, 0}, one_hot(0, 2)) == doctest::Approx(0.693147).epsilon(1e-6));
  double big = cross_entropy(std::vector<double>{1000, 0}, std::size_t{0});
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cross_entropy(std::vector<double>{1, -1}, std::size_t{0}) == doctest::Approx(0.126928).epsilon(1e-6));
  CHECK(cross_entropy(std::vector<double>{0, 1000}, std::size_t{0}) == doctest::Approx(1000.0));
}

TEST_CASE("cross entropy rejects malformed one-hot labels") {
  std::vector<double> z{0, 0, 0};
  CHECK_THROWS_AS(cross_entropy(z, std::vector<double>{1, 1, 0}), ContractError);
  CHECK_THROWS_AS(cross_entropy(z, std::vector<double>{0.5, 0.5, 0}), ContractError);
  CHECK_THROWS_AS(cross_entropy(z, std::vector<double>{0, 0, 0}), ContractError);
  CHECK_THROWS_AS(cross_entropy(z, std::vector<double>{1, 0}), DimensionError);
}

TEST_CASE("logit gradient closed form") {
  auto g = ce_logit_gradient(LogitBundle::make({0, 0}, {0, 0}, 0));
  CHECK(g == std::vector<double>{-0.5, 0.5});
  auto sure = ce_logit_gradient(LogitBundle::make({1000, 0}, {1000, 0}, 0));
  CHECK(sure == std::vector<double>{0.0, 0.0});

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    auto z = rand_vec(rng, 10, 3.0);
    std::size_t label = rng.below(10);
    auto fd = oracle::central_gradient([&](const std::vector<double>& v) { return oracle::softmax_ce(v, label); }, z, 1e-5);
    auto closed = ce_logit_gradient(LogitBundle::make(z, z, label));
    CHECK(oracle::rel_error(closed, fd) < 1e-6);
  }
}

TEST_CASE("logit hessian closed form") {
  CHECK(hessian_dense(std::vector<double>{0.5, 0.5}) == std::vector<double>{0.25, -0.25, -0.25, 0.25});
  for (double v : hessian_dense(std::vector<double>{1.0, 0.0})) CHECK(v == 0.0);

  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    auto z = rand_vec(rng, 5, 2.0);
    std::size_t label = rng.below(5);
    auto h = hessian_dense(softmax(z));
    for (std::size_t j = 0; j < 5; ++j) {
      auto col = oracle::central_gradient(
          [&](const std::vector<double>& v) {
            auto g = ce_logit_gradient(LogitBundle::make(v, v, label));
            return g[j];
          },
          z, 1e-5);
      for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(col[i] - h[j * 5 + i]) < 1e-6);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        row += h[i * 5 + j];
        CHECK(h[i * 5 + j] == h[j * 5 + i]);
      }
      CHECK(std::abs(row) < 1e-15);
    }
    // PSD: Rayleigh quotients on random directions.
    for (int k = 0; k < 20; ++k) {
      auto v = rand_vec(rng, 5, 1.0);
      double q = 0.0;
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) q += v[i] * h[i * 5 + j] * v[j];
      CHECK(q >= -1e-12);
    }
  }
}

TEST_CASE("hessian norm bound") {
  auto half = hessian_norm_bound(std::vector<double>{0.5, 0.5});
  CHECK(half.l1 == 0.5);
  CHECK(half.spectral_upper == 0.5);
  auto sure = hessian_norm_bound(std::vector<double>{1.0, 0.0});
  CHECK(sure.l1 == 0.0);
  CHECK(sure.spectral_upper == 0.0);

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    auto p = softmax(rand_vec(rng, 10, 4.0));
    double norm = oracle::power_iteration(hessian_dense(p), 10, static_cast<unsigned>(t));
    auto b = hessian_norm_bound(p);
    CHECK(norm <= b.spectral_upper + 1e-9);
    CHECK(b.spectral_upper <= 0.5);
  }
  std::vector<double> peak{0.5, 0.5, 0, 0, 0};
  CHECK(oracle::power_iteration(hessian_dense(peak), 5) >= 0.499);
}

TEST_CASE("qub loss reference values") {
  auto same = LogitBundle::make({0.3, -1.2, 2.0}, {0.3, -1.2, 2.0}, 1);
  CHECK(qub_loss(same) == cross_entropy(same.z_clean, same.y));

  auto b = LogitBundle::make({0, 0}, {1, -1}, 0);
  double q = qub_loss(b);
  // ln 2 + (1, -1).(-0.5, 0.5) + 0.25 * 2
  CHECK(q == doctest::Approx(0.193147).epsilon(1e-6));
  CHECK(q >= cross_entropy(b.z_adv, b.y));

  CHECK_THROWS(LogitBundle::make({0, 0}, {1, -1, 0}, 0));
}

TEST_CASE("qub loss upper-bounds the adversarial cross entropy") {
  Rng rng(6);
  std::size_t violations = 0;
  for (int t = 0; t < 10000; ++t) {
    std::size_t c = 2 + rng.below(19);
    auto z = rand_vec(rng, c, 8.0);
    auto z_adv = z;
    for (double& v : z_adv) v += rng.uniform(-5.0, 5.0);
    std::size_t label = rng.below(c);
    if (qub_loss(LogitBundle::make(z, z_adv, label)) < oracle::softmax_ce(z_adv, label) - 1e-9) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("blended loss") {
  auto b = LogitBundle::make({0, 0}, {1, -1}, 0);
  CHECK(blended_loss(b, BlendWeight(0.0)) == qub_loss(b));
  CHECK(blended_loss(b, BlendWeight(1.0)) == cross_entropy(b.z_adv, b.y));
  CHECK(blended_loss(b, BlendWeight(0.5)) == doctest::Approx(0.160038).epsilon(1e-6));
  CHECK_THROWS_AS(BlendWeight(-0.01), ContractError);
  CHECK_THROWS_AS(BlendWeight(1.01), ContractError);
  double l0 = blended_loss(b, BlendWeight(0.0)), l1 = blended_loss(b, BlendWeight(1.0));
  for (double lam : {0.1, 0.37, 0.9}) {
    CHECK(std::abs(blended_loss(b, BlendWeight(lam)) - ((1 - lam) * l0 + lam * l1)) < 1e-12);
  }
}

TEST_CASE("second-term approximation") {
  Mlp m({{3, 6, 3}, Activation::tanh, 1});
  std::vector<double> x{0.1, -0.4, 0.7};
  auto zero = second_term_approximation_error(m, x, std::vector<double>{0, 0, 0}, 2);
  CHECK(zero.exact == 0.0);
  CHECK(zero.approx == 0.0);

  Mlp lin = testutil::linear_model(3, 3, {1, 2, -1, 0.5, 0, 3, -2, 1, 1}, {0.1, 0, -0.3});
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    auto d = rand_vec(rng, 3, 0.5);
    auto r = second_term_approximation_error(lin, x, d, rng.below(3));
    CHECK(std::abs(r.exact - r.approx) < 1e-12);
  }

  double ratio_sum = 0.0;
  for (int t = 0; t < 100; ++t) {
    Mlp net({{3, 12, 12, 3}, Activation::tanh, static_cast<std::uint64_t>(100 + t)});
    auto xt = rand_vec(rng, 3, 1.0);
    std::vector<double> dir(3);
    for (double& v : dir) v = rng.rademacher();
    std::size_t label = rng.below(3);
    auto err = [&](double s) {
      std::vector<double> d = dir;
      for (double& v : d) v *= s;
      auto r = second_term_approximation_error(net, xt, d, label);
      return std::abs(r.exact - r.approx);
    };
    ratio_sum += err(1e-2) / err(5e-3);
  }
  double mean_ratio = ratio_sum / 100.0;
  CHECK(mean_ratio >= 3.0);
  CHECK(mean_ratio <= 5.0);
}

TEST_CASE("cross entropy is convex in the logits") {
  std::vector<double> z{0.2, -1, 3};
  auto y = one_hot(1, 3);
  CHECK(check_ce_convexity(z, z, y, 0.3));
  Rng rng(8);
  auto z2 = rand_vec(rng, 3, 5.0);
  CHECK(check_ce_convexity(z, z2, y, 0.0));
  CHECK(check_ce_convexity(z, z2, y, 1.0));
  std::size_t bad = 0;
  for (int t = 0; t < 20000; ++t) {
    std::size_t c = 2 + rng.below(19);
    if (!check_ce_convexity(rand_vec(rng, c, 10), rand_vec(rng, c, 10), one_hot(rng.below(c), c), rng.uniform())) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("taped losses match the closed forms") {
  Rng rng(9);
  const std::size_t batch = 4, c = 3;
  auto zc = rand_vec(rng, batch * c, 2.0), za = rand_vec(rng, batch * c, 2.0);
  std::vector<int> labels{0, 2, 1, 2};
  Tensor z_clean = Tensor::matrix(batch, c, zc, true);
  Tensor z_adv = Tensor::matrix(batch, c, za, true);

  Tensor ce = cross_entropy(z_clean, labels);
  Tensor qub = qub_loss(z_clean, z_adv, labels);
  Tensor blend = blended_loss(z_clean, z_adv, labels, BlendWeight(0.3));
  for (std::size_t i = 0; i < batch; ++i) {
    auto b = LogitBundle::make(to_vec(z_clean.row(i)), to_vec(z_adv.row(i)), labels[i]);
    CHECK(ce.at(i) == doctest::Approx(cross_entropy(b.z_clean, b.y)).epsilon(1e-14));
    CHECK(qub.at(i) == doctest::Approx(qub_loss(b)).epsilon(1e-14));
    CHECK(blend.at(i) == doctest::Approx(blended_loss(b, BlendWeight(0.3))).epsilon(1e-14));
  }

  // With p - y held constant: d/dz_adv = (p - y) + (z_adv - z_clean) / 2,
  // d/dz_clean = (p - y) - (p - y) - (z_adv - z_clean) / 2.
  backward(sum(qub));
  for (std::size_t i = 0; i < batch; ++i) {
    auto p = softmax(z_clean.row(i));
    for (std::size_t k = 0; k < c; ++k) {
      double g = p[k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0);
      double diff = za[i * c + k] - zc[i * c + k];
      CHECK(z_adv.grad()[i * c + k] == doctest::Approx(g + 0.5 * diff).epsilon(1e-12));
      CHECK(z_clean.grad()[i * c + k] == doctest::Approx(-0.5 * diff).epsilon(1e-12));
    }
  }
}

}
