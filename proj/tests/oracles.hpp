#pragma once

// Independent reference computations used to derive and check expected values.
// Nothing here calls into the library's own derivative or eigen code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Fn = std::function<double(const std::vector<double>&)>;

inline std::vector<double> central_gradient(const Fn& f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double up = f(x);
    x[i] = keep - h;
    double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// max |a - b| / max(|b|, floor), the usual relative check on a vector
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  return max_abs_diff(a, b) / std::max(max_abs(b), floor);
}

// Plain power iteration on a dense symmetric n x n matrix, Rayleigh quotient
// of the final iterate.
inline double power_iteration(const std::vector<double>& m, std::size_t n, unsigned seed = 7,
                              int iters = 2000) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n), w(n);
  for (double& x : v) x = nd(gen);
  double rq = 0.0;
  for (int it = 0; it < iters; ++it) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) w[i] += m[i * n + j] * v[j];
    }
    rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += v[i] * w[i];
    v = w;
  }
  return rq;
}

inline double softmax_ce(const std::vector<double>& z, std::size_t label) {
  // Direct evaluation with long double and a max shift.
  long double mx = *std::max_element(z.begin(), z.end());
  long double s = 0.0L;
  for (double v : z) s += std::exp(static_cast<long double>(v) - mx);
  return static_cast<double>(std::log(s) + mx - z[label]);
}

}  // namespace oracle
