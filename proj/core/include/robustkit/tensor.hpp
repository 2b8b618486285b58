#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle to a node. Operations on tensors that require
// gradients record their parents and a backward rule; backward() walks the
// recorded graph from a scalar root. Nodes are never shared across threads.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace robustkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  // A scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Extents of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Writable view, leaves only. Mutating an interior node would desynchronize
  // its recorded backward rule.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  std::span<const double> row(std::size_t i) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  // Gradient from the most recent backward() through this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  // Deep copy as a new leaf without gradient tracking.
  Tensor detach() const;
  // Deep copy as a new leaf that keeps the requires_grad flag.
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

// Grad buffer of a parent, allocated to zeros on first use during a pass.
std::vector<double>& grad_buffer(Node& node);

// Records a primitive. If no parent requires gradients the result is a plain
// leaf and `backward` is dropped. Throws NumericError on non-finite output.
Tensor record(std::string op, Shape shape, std::vector<double> value,
              std::vector<Tensor> parents, BackwardFn backward);

void check_finite(std::string_view op, std::span<const double> values);

}  // namespace detail

// Topologically ordered view of the graph below a root: every entry's
// parents precede it. Only nodes that require gradients are included.
class Tape {
 public:
  struct Entry {
    std::shared_ptr<detail::Node> node;
    std::vector<std::size_t> parent_indices;
  };

  static Tape record(const Tensor& root);

  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

// Computes d(root)/d(t) for every requires_grad tensor t below root. Grads
// from earlier passes are discarded, and grads accumulate across multiple
// uses of a tensor within one pass. root must be a scalar.
void backward(const Tensor& root);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise. Operands must have equal shapes or one of them must be a
// single-element tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// a[m x n] + row[n] added to every row.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [m x n] -> [m]
Tensor sum_rows(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace robustkit
