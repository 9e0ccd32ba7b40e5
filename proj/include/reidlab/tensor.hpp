#pragma once

// Minimal reverse-mode differentiation engine over dense double arrays.
//
// A Tensor is a shared handle to a graph node. Ops build new nodes that keep
// their parents alive; backward() walks the graph in reverse topological
// order. Leaf gradients accumulate across backward calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reidlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string op;  // empty for leaves
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const;
  double operator[](std::size_t i) const { return node_->values[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->op.empty(); }
  const std::string& op_name() const { return node_->op; }

  void zero_grad();
  // Copy of the current values with no history.
  Tensor detach(bool requires_grad = false) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend Tensor make_result(std::string op, Shape shape,
                            std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn);
  friend std::vector<Tensor> backward(const Tensor& root);
  friend std::size_t graph_size(const Tensor& root);

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Creates a non-leaf node. Exposed for ops defined outside tensor.cpp.
Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn);

// Elementwise binary ops. Shapes must have equal rank with every dimension
// equal or 1 on one side, or one operand must hold a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// a^b with a learnable (broadcast) exponent; a must be positive where the
// exponent gradient is needed.
Tensor pow(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor pow_scalar(const Tensor& x, double p);

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor relu(const Tensor& x);
// ln(1 + e^x), evaluated as max(x, 0) + log1p(exp(-|x|)).
Tensor softplus(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor softmax(const Tensor& x, std::size_t axis);
// Softmax restricted to entries where mask != 0; masked entries get weight 0.
// Every slice along `axis` must contain at least one unmasked entry.
Tensor masked_softmax(const Tensor& x, std::span<const double> mask,
                      std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Unit-normalizes every slice along `axis`. All-zero slices stay zero and
// bump degenerate_normalize_count().
Tensor l2_normalize(const Tensor& x, std::size_t axis);
std::size_t degenerate_normalize_count();

// Picks elements by flat index; output is 1-D.
Tensor gather(const Tensor& x, std::span<const std::size_t> flat_indices);

// Rows of a B×D matrix -> B×B distance matrix. Off-diagonal Euclidean
// entries are sqrt(max(s, 1e-12)); the diagonal is exactly zero.
Tensor pairwise_distance(const Tensor& x, bool squared);

// Populates grad of every requires-grad node reachable from a single-element
// root. Returns the requires-grad leaves reached.
std::vector<Tensor> backward(const Tensor& root);
std::size_t graph_size(const Tensor& root);

// Generic operator construction, keyed by registry name.
enum class OpKind {
  Add, Sub, Mul, Div, Pow, PowScalar, Neg, Exp, Log, Sqrt, Relu, Softplus,
  ClampMin, MatMul, Transpose, Reshape, Sum, Mean, SumAxis, MeanAxis, Softmax,
  MaskedSoftmax, LogSoftmax, Concat, L2Normalize, Gather, PairwiseDistance,
};

struct OpAttrs {
  double scalar = 0.0;
  std::size_t axis = 0;
  bool keepdim = false;
  bool flag = false;
  Shape shape;
  std::vector<std::size_t> indices;
  std::vector<double> mask;
};

Tensor build_op(OpKind kind, std::span<const Tensor> inputs,
                const OpAttrs& attrs = {});

std::string_view op_name(OpKind kind);
const std::vector<OpKind>& registered_ops();

}  // namespace reidlab
