#include "reidlab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace reidlab {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

using detail::Node;

std::atomic<std::size_t> g_degenerate_normalize{0};

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              std::string_view what) {
  throw std::invalid_argument(std::string(op) + ": " + std::string(what) +
                              " (shape " + shape_str(a) + ")");
}

void check_defined(const Tensor& t, std::string_view op) {
  if (!t.defined())
    throw std::invalid_argument(std::string(op) + ": undefined tensor input");
}

// Output-element -> input-element index maps for a broadcast binary op.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
};

BroadcastPlan plan_broadcast(std::string_view op, const Shape& a,
                             const Shape& b) {
  BroadcastPlan plan;
  const std::size_t na = shape_numel(a), nb = shape_numel(b);
  if (a == b) {
    plan.out = a;
    plan.ia.resize(na);
    std::iota(plan.ia.begin(), plan.ia.end(), 0);
    plan.ib = plan.ia;
    return plan;
  }
  if (nb == 1) {
    plan.out = a;
    plan.ia.resize(na);
    std::iota(plan.ia.begin(), plan.ia.end(), 0);
    plan.ib.assign(na, 0);
    return plan;
  }
  if (na == 1) {
    plan.out = b;
    plan.ib.resize(nb);
    std::iota(plan.ib.begin(), plan.ib.end(), 0);
    plan.ia.assign(nb, 0);
    return plan;
  }
  if (a.size() != b.size()) shape_error(op, a, b);
  const std::size_t r = a.size();
  plan.out.resize(r);
  for (std::size_t d = 0; d < r; ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      plan.out[d] = a[d];
    } else if (a[d] == 1) {
      plan.out[d] = b[d];
    } else {
      shape_error(op, a, b);
    }
  }
  // Strides of the inputs, zeroed along broadcast dimensions.
  std::vector<std::size_t> sa(r), sb(r);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t d = r; d-- > 0;) {
    sa[d] = a[d] == 1 ? 0 : acc_a;
    sb[d] = b[d] == 1 ? 0 : acc_b;
    acc_a *= a[d];
    acc_b *= b[d];
  }
  const std::size_t n = shape_numel(plan.out);
  plan.ia.resize(n);
  plan.ib.resize(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t d = 0; d < r; ++d) {
      oa += idx[d] * sa[d];
      ob += idx[d] * sb[d];
    }
    plan.ia[flat] = oa;
    plan.ib[flat] = ob;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < plan.out[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
  std::size_t at(std::size_t o, std::size_t k, std::size_t i) const {
    return (o * len + k) * inner + i;
  }
};

AxisSplit split_axis(std::string_view op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) shape_error(op, s, "axis out of range");
  AxisSplit sp;
  for (std::size_t d = 0; d < axis; ++d) sp.outer *= s[d];
  sp.len = s[axis];
  for (std::size_t d = axis + 1; d < s.size(); ++d) sp.inner *= s[d];
  return sp;
}

template <class Fwd, class Deriv>
Tensor unary(std::string op, const Tensor& x, Fwd fwd, Deriv deriv) {
  check_defined(x, op);
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(std::move(op), x.shape(), std::move(out), {x},
                     [deriv](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         p.grad[i] +=
                             self.grad[i] * deriv(p.values[i], self.values[i]);
                     });
}

// Binary op with broadcasting; da/db return partials given (a, b, y).
template <class Fwd, class Da, class Db>
Tensor binary(std::string op, const Tensor& a, const Tensor& b, Fwd fwd, Da da,
              Db db) {
  check_defined(a, op);
  check_defined(b, op);
  auto plan = std::make_shared<BroadcastPlan>(
      plan_broadcast(op, a.shape(), b.shape()));
  std::vector<double> out(plan->ia.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = fwd(av[plan->ia[i]], bv[plan->ib[i]]);
  Shape shape = plan->out;
  return make_result(
      std::move(op), std::move(shape), std::move(out), {a, b},
      [plan, da, db](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double g = self.grad[i];
          if (g == 0.0) continue;
          const double x = pa.values[plan->ia[i]];
          const double y = pb.values[plan->ib[i]];
          if (pa.requires_grad) pa.grad[plan->ia[i]] += g * da(x, y, self.values[i]);
          if (pb.requires_grad) pb.grad[plan->ib[i]] += g * db(x, y, self.values[i]);
        }
      });
}

double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (auto d : shape)
    if (d == 0) shape_error("tensor", shape, "dimensions must be positive");
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not match " +
                                std::to_string(values.size()) + " values");
  auto node = std::make_shared<Node>();
  node->grad.assign(values.size(), 0.0);
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1)
    shape_error("item", shape(), "tensor does not hold a single element");
  return node_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) shape_error("at", shape(), "expected a matrix");
  return node_->values[r * node_->shape[1] + c];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(node_->shape, node_->values, requires_grad);
}

Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->shape = std::move(shape);
  node->grad.assign(values.size(), 0.0);
  node->values = std::move(values);
  for (const auto& p : parents)
    if (p.node_->requires_grad) node->requires_grad = true;
  // Constant subgraphs keep no history.
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor pow(const Tensor& a, const Tensor& b) {
  return binary(
      "pow", a, b, [](double x, double y) { return std::pow(x, y); },
      [](double x, double y, double) { return y * std::pow(x, y - 1.0); },
      [](double x, double, double out) {
        return x > 0.0 ? out * std::log(x) : 0.0;
      });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      "add_scalar", x, [s](double v) { return v + s; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(
      "mul_scalar", x, [s](double v) { return v * s; },
      [s](double, double) { return s; });
}

Tensor pow_scalar(const Tensor& x, double p) {
  return unary(
      "pow_scalar", x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Tensor neg(const Tensor& x) {
  return unary(
      "neg", x, [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, softplus_value,
               [](double v, double) { return sigmoid(v); });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary(
      "clamp_min", x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [m, k, n](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const auto& g = self.grad;
                       if (pa.requires_grad) {
                         // dA = G Bᵀ
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j)
                               acc += g[i * n + j] * pb.values[p * n + j];
                             pa.grad[i * k + p] += acc;
                           }
                       }
                       if (pb.requires_grad) {
                         // dB = Aᵀ G
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = pa.values[i * k + p];
                             if (aip == 0.0) continue;
                             for (std::size_t j = 0; j < n; ++j)
                               pb.grad[p * n + j] += aip * g[i * n + j];
                           }
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  check_defined(x, "transpose");
  if (x.rank() != 2) shape_error("transpose", x.shape(), "expected a matrix");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  auto xv = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {x},
                     [r, c](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           p.grad[i * c + j] += self.grad[j * r + i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         p.grad[i] += self.grad[i];
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result("sum", {1}, {acc}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  check_defined(x, "mean");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double n = static_cast<double>(x.numel());
  return make_result("mean", {1}, {acc / n}, {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0] / n;
  });
}

namespace {

Tensor reduce_axis(std::string op, const Tensor& x, std::size_t axis,
                   bool keepdim, double scale) {
  check_defined(x, op);
  const AxisSplit sp = split_axis(op, x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
  }
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.len; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xv[sp.at(o, k, i)];
  for (auto& v : out) v *= scale;
  return make_result(std::move(op), std::move(out_shape), std::move(out), {x},
                     [sp, scale](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t k = 0; k < sp.len; ++k)
                           for (std::size_t i = 0; i < sp.inner; ++i)
                             p.grad[sp.at(o, k, i)] +=
                                 scale * self.grad[o * sp.inner + i];
                     });
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  return reduce_axis("sum_axis", x, axis, keepdim, 1.0);
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  check_defined(x, "mean_axis");
  const AxisSplit sp = split_axis("mean_axis", x.shape(), axis);
  return reduce_axis("mean_axis", x, axis, keepdim,
                     1.0 / static_cast<double>(sp.len));
}

// ---------------------------------------------------------------------------
// Softmax family

Tensor masked_softmax(const Tensor& x, std::span<const double> mask,
                      std::size_t axis) {
  check_defined(x, "masked_softmax");
  if (mask.size() != x.numel())
    shape_error("masked_softmax", x.shape(), "mask size differs from input");
  const AxisSplit sp = split_axis("masked_softmax", x.shape(), axis);
  std::vector<double> out(x.numel(), 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const auto j = sp.at(o, k, i);
        if (mask[j] != 0.0) mx = std::max(mx, xv[j]);
      }
      if (mx == -INFINITY)
        shape_error("masked_softmax", x.shape(), "slice with empty mask");
      double z = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const auto j = sp.at(o, k, i);
        if (mask[j] != 0.0) z += (out[j] = std::exp(xv[j] - mx));
      }
      for (std::size_t k = 0; k < sp.len; ++k) out[sp.at(o, k, i)] /= z;
    }
  return make_result("masked_softmax", x.shape(), std::move(out), {x},
                     [sp](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t i = 0; i < sp.inner; ++i) {
                           double dot = 0.0;
                           for (std::size_t k = 0; k < sp.len; ++k) {
                             const auto j = sp.at(o, k, i);
                             dot += self.grad[j] * self.values[j];
                           }
                           for (std::size_t k = 0; k < sp.len; ++k) {
                             const auto j = sp.at(o, k, i);
                             p.grad[j] += self.values[j] * (self.grad[j] - dot);
                           }
                         }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  check_defined(x, "softmax");
  const std::vector<double> ones(x.numel(), 1.0);
  Tensor y = masked_softmax(x, ones, axis);
  return y;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  check_defined(x, "log_softmax");
  const AxisSplit sp = split_axis("log_softmax", x.shape(), axis);
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < sp.len; ++k)
        mx = std::max(mx, xv[sp.at(o, k, i)]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k)
        z += std::exp(xv[sp.at(o, k, i)] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t k = 0; k < sp.len; ++k) {
        const auto j = sp.at(o, k, i);
        out[j] = xv[j] - lse;
      }
    }
  return make_result("log_softmax", x.shape(), std::move(out), {x},
                     [sp](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t i = 0; i < sp.inner; ++i) {
                           double gsum = 0.0;
                           for (std::size_t k = 0; k < sp.len; ++k)
                             gsum += self.grad[sp.at(o, k, i)];
                           for (std::size_t k = 0; k < sp.len; ++k) {
                             const auto j = sp.at(o, k, i);
                             p.grad[j] +=
                                 self.grad[j] - std::exp(self.values[j]) * gsum;
                           }
                         }
                     });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  for (const auto& t : parts) check_defined(t, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_error("concat", first, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) shape_error("concat", first, s);
    out_shape[axis] += s[axis];
  }
  const AxisSplit osp = split_axis("concat", out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : parts) {
    offsets.push_back(off);
    const AxisSplit sp = split_axis("concat", t.shape(), axis);
    auto tv = t.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.len; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i)
          out[osp.at(o, off + k, i)] = tv[sp.at(o, k, i)];
    off += sp.len;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result(
      "concat", std::move(out_shape), std::move(out), std::move(parents),
      [osp, offsets, axis](Node& self) {
        for (std::size_t n = 0; n < self.parents.size(); ++n) {
          Node& p = *self.parents[n];
          if (!p.requires_grad) continue;
          const AxisSplit sp = split_axis("concat", p.shape, axis);
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t k = 0; k < sp.len; ++k)
              for (std::size_t i = 0; i < sp.inner; ++i)
                p.grad[sp.at(o, k, i)] +=
                    self.grad[osp.at(o, offsets[n] + k, i)];
        }
      });
}

Tensor l2_normalize(const Tensor& x, std::size_t axis) {
  check_defined(x, "l2_normalize");
  const AxisSplit sp = split_axis("l2_normalize", x.shape(), axis);
  std::vector<double> out(x.numel(), 0.0);
  std::vector<double> norms(sp.outer * sp.inner, 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double ss = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const double v = xv[sp.at(o, k, i)];
        ss += v * v;
      }
      const double nrm = std::sqrt(ss);
      norms[o * sp.inner + i] = nrm;
      if (nrm == 0.0) {
        g_degenerate_normalize.fetch_add(1, std::memory_order_relaxed);
        continue;
      }
      for (std::size_t k = 0; k < sp.len; ++k) {
        const auto j = sp.at(o, k, i);
        out[j] = xv[j] / nrm;
      }
    }
  return make_result(
      "l2_normalize", x.shape(), std::move(out), {x},
      [sp, norms = std::move(norms)](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const double nrm = norms[o * sp.inner + i];
            if (nrm == 0.0) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < sp.len; ++k) {
              const auto j = sp.at(o, k, i);
              dot += self.grad[j] * self.values[j];
            }
            for (std::size_t k = 0; k < sp.len; ++k) {
              const auto j = sp.at(o, k, i);
              p.grad[j] += (self.grad[j] - self.values[j] * dot) / nrm;
            }
          }
      });
}

std::size_t degenerate_normalize_count() {
  return g_degenerate_normalize.load(std::memory_order_relaxed);
}

Tensor gather(const Tensor& x, std::span<const std::size_t> flat_indices) {
  check_defined(x, "gather");
  if (flat_indices.empty())
    shape_error("gather", x.shape(), "empty index list");
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= x.numel())
      shape_error("gather", x.shape(), "index out of range");
    out[i] = x.values()[flat_indices[i]];
  }
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  const std::size_t n = idx.size();
  return make_result("gather", {n}, std::move(out), {x},
                     [idx = std::move(idx)](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         p.grad[idx[i]] += self.grad[i];
                     });
}

Tensor pairwise_distance(const Tensor& x, bool squared) {
  check_defined(x, "pairwise_distance");
  if (x.rank() != 2)
    shape_error("pairwise_distance", x.shape(), "expected a B×D matrix");
  constexpr double kFloor = 1e-12;
  const std::size_t b = x.dim(0), d = x.dim(1);
  std::vector<double> out(b * b, 0.0);
  auto sq = std::make_shared<std::vector<double>>(b * b, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xv[i * d + k] - xv[j * d + k];
        s += diff * diff;
      }
      (*sq)[i * b + j] = (*sq)[j * b + i] = s;
      const double v = squared ? s : std::sqrt(std::max(s, kFloor));
      out[i * b + j] = out[j * b + i] = v;
    }
  return make_result(
      "pairwise_distance", {b, b}, std::move(out), {x},
      [b, d, squared, sq](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            const double g = self.grad[i * b + j];
            if (g == 0.0) continue;
            double ds;  // d(entry)/d(squared distance)
            if (squared) {
              ds = 1.0;
            } else {
              const double s = (*sq)[i * b + j];
              ds = s > kFloor ? 0.5 / self.values[i * b + j] : 0.0;
            }
            const double c = 2.0 * g * ds;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = p.values[i * d + k] - p.values[j * d + k];
              p.grad[i * d + k] += c * diff;
              p.grad[j * d + k] -= c * diff;
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Backward

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

std::vector<Tensor> backward(const Tensor& root) {
  check_defined(root, "backward");
  if (root.numel() != 1)
    shape_error("backward", root.shape(), "root must be a single element");
  std::vector<Tensor> leaves;
  if (!root.requires_grad()) return leaves;
  Node* r = root.node_.get();
  auto order = topo_order(r);
  for (Node* n : order)
    if (!n->op.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  r->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  // Recover owning handles for the leaves reached.
  std::unordered_set<Node*> visited{r};
  std::vector<std::shared_ptr<Node>> frontier{root.node_};
  while (!frontier.empty()) {
    auto n = frontier.back();
    frontier.pop_back();
    if (n->op.empty()) {
      leaves.push_back(Tensor(n));
      continue;
    }
    for (auto& p : n->parents)
      if (p->requires_grad && visited.insert(p.get()).second)
        frontier.push_back(p);
  }
  return leaves;
}

std::size_t graph_size(const Tensor& root) {
  if (!root.defined()) return 0;
  std::unordered_set<Node*> seen{root.node_.get()};
  std::vector<Node*> stack{root.node_.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    for (auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  return seen.size();
}

// ---------------------------------------------------------------------------
// Registry

namespace {

struct OpInfo {
  OpKind kind;
  std::string_view name;
  std::size_t arity;  // 0 = variadic
};

constexpr OpInfo kOps[] = {
    {OpKind::Add, "add", 2},
    {OpKind::Sub, "subtract", 2},
    {OpKind::Mul, "multiply", 2},
    {OpKind::Div, "divide", 2},
    {OpKind::Pow, "pow", 2},
    {OpKind::PowScalar, "pow_scalar", 1},
    {OpKind::Neg, "neg", 1},
    {OpKind::Exp, "exp", 1},
    {OpKind::Log, "log", 1},
    {OpKind::Sqrt, "sqrt", 1},
    {OpKind::Relu, "relu", 1},
    {OpKind::Softplus, "softplus", 1},
    {OpKind::ClampMin, "clamp_min", 1},
    {OpKind::MatMul, "matmul", 2},
    {OpKind::Transpose, "transpose", 1},
    {OpKind::Reshape, "reshape", 1},
    {OpKind::Sum, "sum", 1},
    {OpKind::Mean, "mean", 1},
    {OpKind::SumAxis, "sum_axis", 1},
    {OpKind::MeanAxis, "mean_axis", 1},
    {OpKind::Softmax, "softmax", 1},
    {OpKind::MaskedSoftmax, "masked_softmax", 1},
    {OpKind::LogSoftmax, "log_softmax", 1},
    {OpKind::Concat, "concat", 0},
    {OpKind::L2Normalize, "l2_normalize", 1},
    {OpKind::Gather, "gather", 1},
    {OpKind::PairwiseDistance, "pairwise_distance", 1},
};

const OpInfo& info(OpKind kind) {
  for (const auto& i : kOps)
    if (i.kind == kind) return i;
  throw std::invalid_argument("unknown op kind");
}

}  // namespace

std::string_view op_name(OpKind kind) { return info(kind).name; }

const std::vector<OpKind>& registered_ops() {
  static const std::vector<OpKind> ops = [] {
    std::vector<OpKind> v;
    for (const auto& i : kOps) v.push_back(i.kind);
    return v;
  }();
  return ops;
}

Tensor build_op(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  const OpInfo& op = info(kind);
  if (op.arity != 0 && in.size() != op.arity)
    throw std::invalid_argument(std::string(op.name) + ": expected " +
                                std::to_string(op.arity) + " inputs, got " +
                                std::to_string(in.size()));
  switch (kind) {
    case OpKind::Add: return add(in[0], in[1]);
    case OpKind::Sub: return sub(in[0], in[1]);
    case OpKind::Mul: return mul(in[0], in[1]);
    case OpKind::Div: return div(in[0], in[1]);
    case OpKind::Pow: return pow(in[0], in[1]);
    case OpKind::PowScalar: return pow_scalar(in[0], attrs.scalar);
    case OpKind::Neg: return neg(in[0]);
    case OpKind::Exp: return exp(in[0]);
    case OpKind::Log: return log(in[0]);
    case OpKind::Sqrt: return sqrt(in[0]);
    case OpKind::Relu: return relu(in[0]);
    case OpKind::Softplus: return softplus(in[0]);
    case OpKind::ClampMin: return clamp_min(in[0], attrs.scalar);
    case OpKind::MatMul: return matmul(in[0], in[1]);
    case OpKind::Transpose: return transpose(in[0]);
    case OpKind::Reshape: return reshape(in[0], attrs.shape);
    case OpKind::Sum: return sum(in[0]);
    case OpKind::Mean: return mean(in[0]);
    case OpKind::SumAxis: return sum_axis(in[0], attrs.axis, attrs.keepdim);
    case OpKind::MeanAxis: return mean_axis(in[0], attrs.axis, attrs.keepdim);
    case OpKind::Softmax: return softmax(in[0], attrs.axis);
    case OpKind::MaskedSoftmax: return masked_softmax(in[0], attrs.mask, attrs.axis);
    case OpKind::LogSoftmax: return log_softmax(in[0], attrs.axis);
    case OpKind::Concat: return concat(in, attrs.axis);
    case OpKind::L2Normalize: return l2_normalize(in[0], attrs.axis);
    case OpKind::Gather: return gather(in[0], attrs.indices);
    case OpKind::PairwiseDistance: return pairwise_distance(in[0], attrs.flag);
  }
  throw std::invalid_argument("unknown op kind");
}

}  // namespace reidlab
