#pragma once

#include <cstdlib>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "robustkit/model.hpp"
#include "robustkit/tensor.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  const char* env = std::getenv("ROBUSTKIT_TEST_TMP");
  std::filesystem::path root = env ? env : std::filesystem::temp_directory_path() / "robustkit_tests";
  auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

inline robustkit::Mlp zero_model(std::vector<std::size_t> widths) {
  std::vector<robustkit::Tensor> w, b;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    w.push_back(robustkit::Tensor::zeros({widths[l + 1], widths[l]}));
    b.push_back(robustkit::Tensor::zeros({widths[l + 1]}));
  }
  return robustkit::Mlp({widths, robustkit::Activation::relu, 0}, w, b);
}

// Single linear layer with the given [C x d] weights and bias.
inline robustkit::Mlp linear_model(std::size_t c, std::size_t d, std::vector<double> w, std::vector<double> b) {
  return robustkit::Mlp({{d, c}, robustkit::Activation::relu, 0},
                        {robustkit::Tensor::matrix(c, d, std::move(w))},
                        {robustkit::Tensor::vector(std::move(b))});
}

}  // namespace testutil
