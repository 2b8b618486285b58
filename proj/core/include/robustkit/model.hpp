#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "robustkit/tensor.hpp"

namespace robustkit {

enum class Activation { relu, tanh };

struct MlpConfig {
  // Input width, hidden widths, class count.
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;

  void validate() const;
};

// Fully connected classifier producing logits. Layer l maps width[l] to
// width[l+1] with weight [width[l+1] x width[l]] and bias [width[l+1]].
//
// Copies are deep. Parameters are leaf tensors; the trainer switches on
// their gradient tracking, everything else treats the model as read-only.
class Mlp {
 public:
  // He-style uniform init, bound sqrt(6 / fan_in), zero biases.
  explicit Mlp(MlpConfig config);
  Mlp(MlpConfig config, std::vector<Tensor> weights, std::vector<Tensor> biases);

  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  const MlpConfig& config() const { return config_; }
  std::size_t input_width() const { return config_.layer_widths.front(); }
  std::size_t num_classes() const { return config_.layer_widths.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  // x: [B x d] -> logits [B x C], no softmax.
  Tensor forward(const Tensor& x) const;
  std::vector<double> logits(std::span<const double> x) const;

  Tensor& weight(std::size_t layer) { return weights_.at(layer); }
  Tensor& bias(std::size_t layer) { return biases_.at(layer); }
  const Tensor& weight(std::size_t layer) const { return weights_.at(layer); }
  const Tensor& bias(std::size_t layer) const { return biases_.at(layer); }

  // Handles in layer order: w0, b0, w1, b1, ...
  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool on);
  // Deep copy with gradient tracking off.
  Mlp frozen() const;

  // Bitwise parameter equality.
  bool same_parameters(const Mlp& other) const;

 private:
  MlpConfig config_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Index of the largest logit per row; ties go to the lowest index.
std::vector<int> predict(const Mlp& model, const Tensor& x);
std::size_t argmax(std::span<const double> values);

// Checkpoint layout (all little-endian):
//   "RKPT", u32 version = 1, u32 layer count, per layer (u32 rows, u32 cols),
//   every weight matrix (row-major) then every bias, as f64, in layer order,
//   u64 init_seed, u32 CRC32 of all preceding bytes.
// Only relu networks are representable.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Mlp& model);
Mlp decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Mlp& model, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace robustkit
