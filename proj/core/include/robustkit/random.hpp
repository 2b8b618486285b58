#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace robustkit {

// Mixes a base seed with a tag into an independent stream seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// Seeded generator with platform-independent variate conversion.
//
// The standard distributions are implementation-defined, so two standard
// libraries would disagree on the same seed. Only the engine is taken from
// <random>; the conversions below are fixed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // +1 or -1 with equal probability.
  double rademacher() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace robustkit
