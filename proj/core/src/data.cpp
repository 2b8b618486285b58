#include "robustkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include "robustkit/error.hpp"
#include "robustkit/random.hpp"

namespace robustkit {

void Dataset::validate() const {
  if (size() == 0) throw ContractError("dataset is empty");
  if (x.rank() != 2 || x.rows() != y.size()) {
    throw DimensionError("dataset features " + shape_to_string(x.shape()) + " vs " +
                         std::to_string(y.size()) + " labels");
  }
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
  }
  detail::check_finite("dataset features", x.values());
  if (feature_box) {
    for (double v : x.values()) {
      if (v < feature_box->lo || v > feature_box->hi) {
        throw ContractError("feature outside the dataset feature box");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::size_t d = dim();
  std::vector<double> xs;
  xs.reserve(indices.size() * d);
  std::vector<int> ys;
  ys.reserve(indices.size());
  for (std::size_t i : indices) {
    auto row = sample(i);
    xs.insert(xs.end(), row.begin(), row.end());
    ys.push_back(y.at(i));
  }
  return Dataset{Tensor::matrix(indices.size(), d, std::move(xs)), std::move(ys), num_classes,
                 feature_box};
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), 0);
  return subset(idx);
}

Dataset gen_two_gaussians(std::size_t n, double separation, double sigma, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw ConfigError("n", "must be positive and even");
  if (!(separation > 0.0)) throw ConfigError("separation", "must be > 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma", "must be >= 0");
  Rng rng(seed);
  std::vector<double> xs(n * 2);
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label = i < n / 2 ? 0 : 1;
    double cx = label == 0 ? -separation / 2.0 : separation / 2.0;
    xs[2 * i] = cx + sigma * rng.normal();
    xs[2 * i + 1] = sigma * rng.normal();
    ys[i] = label;
  }
  Dataset ds{Tensor::matrix(n, 2, std::move(xs)), std::move(ys), 2, std::nullopt};
  ds.validate();
  return ds;
}

Dataset gen_spirals(std::size_t n, double turns, double noise, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw ConfigError("n", "must be positive and even");
  if (!(turns > 0.0)) throw ConfigError("turns", "must be > 0");
  if (!(noise >= 0.0)) throw ConfigError("noise", "must be >= 0");
  Rng rng(seed);
  std::size_t half = n / 2;
  // Angles start a little past the origin so the two arms never meet.
  const double start = 0.25 * std::numbers::pi;
  const double end = start + 2.0 * std::numbers::pi * turns;
  std::vector<double> xs(n * 2);
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < half; ++i) {
    double t = half == 1 ? start : start + (end - start) * static_cast<double>(i) / (half - 1);
    double px = t * std::cos(t), py = t * std::sin(t);
    for (int label = 0; label < 2; ++label) {
      std::size_t k = label == 0 ? i : half + i;
      double sign = label == 0 ? 1.0 : -1.0;
      xs[2 * k] = sign * px / end + noise * rng.normal();
      xs[2 * k + 1] = sign * py / end + noise * rng.normal();
      ys[k] = label;
    }
  }
  double extent = 0.0;
  for (double v : xs) extent = std::max(extent, std::abs(v));
  if (extent > 1.0) {
    for (double& v : xs) v /= extent;
  }
  Dataset ds{Tensor::matrix(n, 2, std::move(xs)), std::move(ys), 2, std::nullopt};
  ds.validate();
  return ds;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

void check_magic(const std::vector<std::uint8_t>& bytes, std::uint32_t expected,
                 const std::filesystem::path& path) {
  if (bytes.size() < 4) throw TruncatedFileError(path.string() + " IDX magic", 4, bytes.size());
  std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected) {
    throw FormatError(path.string() + ": IDX magic " + hex32(magic) + ", expected " +
                      hex32(expected));
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  auto img = read_file(images);
  auto lab = read_file(labels);
  check_magic(img, 0x00000803, images);
  check_magic(lab, 0x00000801, labels);
  if (img.size() < 16) throw TruncatedFileError(images.string() + " header", 16, img.size());
  if (lab.size() < 8) throw TruncatedFileError(labels.string() + " header", 8, lab.size());
  std::size_t n_img = read_be32(img, 4);
  std::size_t rows = read_be32(img, 8);
  std::size_t cols = read_be32(img, 12);
  std::size_t n_lab = read_be32(lab, 4);
  if (n_img != n_lab) {
    throw DimensionError("IDX files disagree on sample count: " + std::to_string(n_img) +
                         " images vs " + std::to_string(n_lab) + " labels");
  }
  std::size_t d = rows * cols;
  if (img.size() < 16 + n_img * d) {
    throw TruncatedFileError(images.string() + " pixel data", 16 + n_img * d, img.size());
  }
  if (lab.size() < 8 + n_lab) throw TruncatedFileError(labels.string() + " label data", 8 + n_lab, lab.size());
  std::size_t n = limit == 0 ? n_img : std::min(limit, n_img);
  if (n == 0) throw ContractError("IDX files contain no samples");
  std::vector<double> xs(n * d);
  for (std::size_t i = 0; i < n * d; ++i) xs[i] = static_cast<double>(img[16 + i]) / 255.0;
  std::vector<int> ys(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = lab[8 + i];
    max_label = std::max(max_label, ys[i]);
  }
  Dataset ds{Tensor::matrix(n, d, std::move(xs)), std::move(ys),
             std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1),
             FeatureBox{0.0, 1.0}};
  ds.validate();
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_frac > 0.0 && spec.train_frac < 1.0)) {
    throw ConfigError("train_frac", "must lie in (0, 1)");
  }
  std::size_t n = ds.size();
  auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw ContractError("split leaves one side empty");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(spec.shuffle_seed);
  rng.shuffle(std::span<std::size_t>(idx));
  std::span<const std::size_t> all(idx);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ConfigError("batch_size", "must be >= 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(epoch_seed);
  rng.shuffle(std::span<std::size_t>(idx));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed) {
  std::vector<Batch> out;
  for (auto& idx : batch_indices(ds.size(), batch_size, epoch_seed)) {
    Dataset part = ds.subset(idx);
    out.push_back(Batch{std::move(part.x), std::move(part.y), std::move(idx)});
  }
  return out;
}

}  // namespace robustkit
