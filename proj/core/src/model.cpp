#include "robustkit/model.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "robustkit/error.hpp"
#include "robustkit/random.hpp"

namespace robustkit {

void MlpConfig::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError("layer_widths", "need at least input and output widths");
  }
  for (std::size_t w : layer_widths) {
    if (w < 1) throw ConfigError("layer_widths", "every width must be >= 1");
  }
  if (layer_widths.back() < 2) throw ConfigError("layer_widths", "need at least 2 classes");
}

Mlp::Mlp(MlpConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.init_seed);
  for (std::size_t l = 0; l + 1 < config_.layer_widths.size(); ++l) {
    std::size_t fan_in = config_.layer_widths[l];
    std::size_t fan_out = config_.layer_widths[l + 1];
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    weights_.push_back(Tensor::matrix(fan_out, fan_in, std::move(w)));
    biases_.push_back(Tensor::zeros(Shape{fan_out}));
  }
}

Mlp::Mlp(MlpConfig config, std::vector<Tensor> weights, std::vector<Tensor> biases)
    : config_(std::move(config)), weights_(std::move(weights)), biases_(std::move(biases)) {
  config_.validate();
  std::size_t layers = config_.layer_widths.size() - 1;
  if (weights_.size() != layers || biases_.size() != layers) {
    throw DimensionError("Mlp: expected " + std::to_string(layers) + " layers of parameters");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    Shape ws{config_.layer_widths[l + 1], config_.layer_widths[l]};
    Shape bs{config_.layer_widths[l + 1]};
    if (weights_[l].shape() != ws || biases_[l].shape() != bs) {
      throw DimensionError("Mlp: layer " + std::to_string(l) + " parameters have shapes " +
                           shape_to_string(weights_[l].shape()) + "/" +
                           shape_to_string(biases_[l].shape()) + ", expected " +
                           shape_to_string(ws) + "/" + shape_to_string(bs));
    }
  }
}

Mlp::Mlp(const Mlp& other) : config_(other.config_) {
  for (const Tensor& w : other.weights_) weights_.push_back(w.clone());
  for (const Tensor& b : other.biases_) biases_.push_back(b.clone());
}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    Mlp copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_width()) {
    throw DimensionError("forward: input of shape " + shape_to_string(x.shape()) +
                         " does not match input width " + std::to_string(input_width()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, transpose(weights_[l])), biases_[l]);
    if (l + 1 < weights_.size()) {
      h = config_.activation == Activation::relu ? relu(h) : robustkit::tanh(h);
    }
  }
  return h;
}

std::vector<double> Mlp::logits(std::span<const double> x) const {
  Tensor out = frozen().forward(Tensor::matrix(1, x.size(), {x.begin(), x.end()}));
  return {out.values().begin(), out.values().end()};
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

void Mlp::set_requires_grad(bool on) {
  for (Tensor& w : weights_) w.set_requires_grad(on);
  for (Tensor& b : biases_) b.set_requires_grad(on);
}

Mlp Mlp::frozen() const {
  Mlp copy(*this);
  copy.set_requires_grad(false);
  return copy;
}

bool Mlp::same_parameters(const Mlp& other) const {
  if (config_.layer_widths != other.config_.layer_widths) return false;
  auto a = parameters();
  auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto av = a[i].values();
    auto bv = b[i].values();
    if (std::memcmp(av.data(), bv.data(), av.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<int> predict(const Mlp& model, const Tensor& x) {
  Tensor z = model.frozen().forward(x);
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) out[i] = static_cast<int>(argmax(z.row(i)));
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Mlp& model) {
  if (model.config().activation != Activation::relu) {
    throw ContractError("checkpoint format v1 stores relu networks only");
  }
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.num_layers()));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.weight(l).rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.weight(l).cols()));
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto v = model.weight(l).values();
    w.put_bytes(v.data(), v.size() * sizeof(double));
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto v = model.bias(l).values();
    w.put_bytes(v.data(), v.size() * sizeof(double));
  }
  w.put<std::uint64_t>(model.config().init_seed);
  w.put<std::uint32_t>(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

Mlp decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 12;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic, expected \"RKPT\"");
  }
  if (bytes.size() < kHeader) throw TruncatedFileError("checkpoint header", kHeader, bytes.size());
  Reader r(bytes);
  r.get<std::uint32_t>();
  auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  auto layers = r.get<std::uint32_t>();
  if (layers == 0) throw ShapeTableError("checkpoint: layer count is zero");
  std::size_t table_end = kHeader + 8ull * layers;
  if (bytes.size() < table_end) throw TruncatedFileError("checkpoint shape table", table_end, bytes.size());

  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(layers);
  std::size_t payload = 0;
  for (auto& [rows, cols] : shapes) {
    rows = r.get<std::uint32_t>();
    cols = r.get<std::uint32_t>();
    payload += (static_cast<std::size_t>(rows) * cols + rows) * sizeof(double);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    auto [rows, cols] = shapes[l];
    if (rows == 0 || cols == 0) {
      throw ShapeTableError("checkpoint: layer " + std::to_string(l) + " has a zero extent");
    }
    if (l > 0 && cols != shapes[l - 1].first) {
      throw ShapeTableError("checkpoint: layer " + std::to_string(l) + " expects " +
                            std::to_string(cols) + " inputs but layer " + std::to_string(l - 1) +
                            " produces " + std::to_string(shapes[l - 1].first));
    }
  }
  std::size_t expected = table_end + payload + sizeof(std::uint64_t) + sizeof(std::uint32_t);
  if (bytes.size() < expected) throw TruncatedFileError("checkpoint payload", expected, bytes.size());
  if (bytes.size() > expected) {
    throw ShapeTableError("checkpoint: shape table implies " + std::to_string(expected) +
                          " bytes but file has " + std::to_string(bytes.size()));
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + expected - 4, 4);
  std::uint32_t actual_crc = crc32_of(bytes.first(expected - 4));
  if (stored_crc != actual_crc) {
    throw ChecksumError("checkpoint: CRC32 mismatch (stored " + std::to_string(stored_crc) +
                        ", computed " + std::to_string(actual_crc) + ")");
  }

  MlpConfig config;
  config.layer_widths.push_back(shapes[0].second);
  for (auto [rows, cols] : shapes) config.layer_widths.push_back(rows);
  std::vector<Tensor> weights, biases;
  auto read_doubles = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = r.get<double>();
    return v;
  };
  for (auto [rows, cols] : shapes) weights.push_back(Tensor::matrix(rows, cols, read_doubles(std::size_t{rows} * cols)));
  for (auto [rows, cols] : shapes) biases.push_back(Tensor::vector(read_doubles(rows)));
  config.init_seed = r.get<std::uint64_t>();
  for (const auto* group : {&weights, &biases}) {
    for (const Tensor& t : *group) detail::check_finite("checkpoint parameters", t.values());
  }
  return Mlp(std::move(config), std::move(weights), std::move(biases));
}

void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
  auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace robustkit
