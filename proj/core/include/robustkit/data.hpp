#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "robustkit/tensor.hpp"

namespace robustkit {

struct FeatureBox {
  double lo;
  double hi;
};

struct Dataset {
  Tensor x;             // [n x d]
  std::vector<int> y;   // labels in [0, num_classes)
  std::size_t num_classes = 2;
  std::optional<FeatureBox> feature_box;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  std::span<const double> sample(std::size_t i) const { return x.row(i); }

  void validate() const;
  // Rows in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset head(std::size_t n) const;
};

// n/2 points per class around (-separation/2, 0) and (+separation/2, 0).
Dataset gen_two_gaussians(std::size_t n, double separation, double sigma, std::uint64_t seed);

// Two interleaved Archimedean spirals rescaled into [-1, 1]^2.
Dataset gen_spirals(std::size_t n, double turns, double noise, std::uint64_t seed);

// IDX image/label pair (0x00000803 / 0x00000801, big-endian). Pixels are
// scaled to [0, 1]; limit = 0 loads every sample.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

struct SplitSpec {
  double train_frac = 0.9;
  std::uint64_t shuffle_seed = 0;
};

// Seeded shuffle then cut; the two parts partition the dataset.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

struct Batch {
  Tensor x;
  std::vector<int> y;
  std::vector<std::size_t> indices;
};

// ceil(n / B) batches over a seeded permutation; the last may be smaller.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t epoch_seed);
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed);

}  // namespace robustkit
