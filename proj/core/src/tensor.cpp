#include "robustkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "robustkit/error.hpp"

namespace robustkit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& grad_buffer(Node& node) {
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void check_finite(std::string_view op, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "non-finite value " << values[i] << " produced by " << op << " at index " << i;
      throw NumericError(os.str());
    }
  }
}

Tensor record(std::string op, Shape shape, std::vector<double> value,
              std::vector<Tensor> parents, BackwardFn backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  bool tracked = std::any_of(parents.begin(), parents.end(),
                             [](const Tensor& p) { return p.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

using detail::Node;

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_to_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_to_string(shape()));
  return shape()[1];
}

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("mutable_values() on non-leaf tensor (" + node_->op + ")");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  return node_->value.at(i * cols() + j);
}

std::span<const double> Tensor::row(std::size_t i) const {
  std::size_t c = cols();
  if (i >= rows()) throw DimensionError("row index " + std::to_string(i) + " out of range");
  return std::span<const double>(node_->value).subspan(i * c, c);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("set_requires_grad() on non-leaf tensor");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

bool Tensor::is_leaf() const { return node_->parents.empty() && !node_->backward; }

bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient; run backward() first");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value, node_->requires_grad); }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_map<const Node*, std::size_t> index;
  std::unordered_map<const Node*, bool> seen;
  // Iterative post-order DFS; a node is emitted after all of its parents.
  struct Frame {
    std::shared_ptr<Node> node;
    std::size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node()});
  seen[root.node().get()] = true;
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      const auto& parent = top.node->parents[top.next_parent++];
      if (!parent->requires_grad || seen.count(parent.get())) continue;
      seen[parent.get()] = true;
      stack.push_back({parent});
      continue;
    }
    Entry entry;
    entry.node = std::move(top.node);
    stack.pop_back();
    for (const auto& p : entry.node->parents) {
      auto it = index.find(p.get());
      if (it != index.end()) entry.parent_indices.push_back(it->second);
    }
    index[entry.node.get()] = tape.entries_.size();
    tape.entries_.push_back(std::move(entry));
  }
  return tape;
}

void backward(const Tensor& root) {
  if (root.numel() != 1 || root.rank() != 0) {
    throw ContractError("backward() needs a scalar root, got shape " +
                        shape_to_string(root.shape()));
  }
  if (!root.requires_grad()) {
    throw ContractError("backward() root does not depend on any tensor that requires grad");
  }
  Tape tape = Tape::record(root);
  for (const auto& e : tape.entries()) e.node->grad.assign(e.node->value.size(), 0.0);
  root.node()->grad[0] = 1.0;
  auto entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    Node& node = *it->node;
    if (node.backward) node.backward(node);
  }
  for (const auto& e : entries) detail::check_finite("backward(" + e.node->op + ")", e.node->grad);
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_to_string(t.shape()));
  }
}

// Accumulates into parent k if it takes part in the pass.
template <typename F>
void accumulate(Node& self, std::size_t k, F&& fill) {
  Node& parent = *self.parents[k];
  if (!parent.requires_grad) return;
  fill(detail::grad_buffer(parent));
}

enum class Broadcast { none, scalar_a, scalar_b };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.numel() == 1) return Broadcast::scalar_a;
  if (b.numel() == 1) return Broadcast::scalar_b;
  throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                       shape_to_string(b.shape()) + " are not compatible");
}

template <typename Fwd>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
              detail::BackwardFn bwd) {
  Broadcast kind = broadcast_kind(a, b, op);
  const Shape& out_shape = kind == Broadcast::scalar_a ? b.shape() : a.shape();
  std::size_t n = shape_numel(out_shape);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = kind == Broadcast::scalar_a ? av[0] : av[i];
    double y = kind == Broadcast::scalar_b ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  return detail::record(op, out_shape, std::move(out), {a, b}, std::move(bwd));
}

// Index into an operand that may be broadcast from a single element.
inline std::size_t bidx(const Node& operand, std::size_t i) {
  return operand.value.size() == 1 ? 0 : i;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return detail::record("matmul", Shape{m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    // dA = G * B^T
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = bv.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    });
    // dB = A^T * G
    accumulate(self, 1, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          double aip = av[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    });
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  std::size_t m = a.rows(), n = a.cols();
  auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return detail::record("transpose", Shape{n, m}, std::move(out), {a}, [m, n](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; }, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      accumulate(self, k, [&](std::vector<double>& gp) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          gp[bidx(*self.parents[k], i)] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; }, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        ga[bidx(*self.parents[0], i)] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        gb[bidx(*self.parents[1], i)] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; }, [](Node& self) {
    const Node& pa = *self.parents[0];
    const Node& pb = *self.parents[1];
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        ga[bidx(pa, i)] += self.grad[i] * pb.value[bidx(pb, i)];
    });
    accumulate(self, 1, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        gb[bidx(pb, i)] += self.grad[i] * pa.value[bidx(pa, i)];
    });
  });
}

namespace {

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return detail::record(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
    const auto& x = self.parents[0]->value;
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
    });
  });
}

}  // namespace

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
  // relu'(0) = 0.
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      std::ostringstream os;
      os << "log: non-positive input " << av[i] << " at index " << i;
      throw DomainError(os.str());
    }
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_row");
  std::size_t m = a.rows(), n = a.cols();
  if (row.rank() != 1 || row.numel() != n) {
    throw DimensionError("add_row: row of shape " + shape_to_string(row.shape()) +
                         " does not match " + shape_to_string(a.shape()));
  }
  auto av = a.values();
  auto rv = row.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + rv[j];
  return detail::record("add_row", a.shape(), std::move(out), {a, row}, [m, n](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < m * n; ++i) ga[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& gr) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += self.grad[i * n + j];
    });
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return detail::record("sum", Shape{}, {total}, {a}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (double& g : ga) g += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  double inv = 1.0 / static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.values()) total += v;
  return detail::record("mean", Shape{}, {total * inv}, {a}, [inv](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& ga) {
      double g = self.grad[0] * inv;
      for (double& x : ga) x += g;
    });
  });
}

Tensor sum_rows(const Tensor& a) {
  require_rank(a, 2, "sum_rows");
  std::size_t m = a.rows(), n = a.cols();
  auto av = a.values();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  return detail::record("sum_rows", Shape{m}, std::move(out), {a}, [m, n](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i];
    });
  });
}

}  // namespace robustkit
