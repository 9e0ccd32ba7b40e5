#include "reidlab/gradsuite.hpp"

#include <functional>
#include <random>
#include <stdexcept>

#include "reidlab/gradcheck.hpp"
#include "reidlab/losses.hpp"
#include "reidlab/pooling.hpp"

namespace reidlab {

namespace {

using Rng = std::mt19937_64;

Tensor leaf(Shape shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Values in [-hi, -gap] ∪ [gap, hi], away from a kink at zero.
Tensor leaf_off_zero(Shape shape, Rng& rng, double gap, double hi) {
  std::uniform_real_distribution<double> u(gap, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Contracts an arbitrary output to a scalar with fixed random weights so
// every output element reaches the gradient.
Tensor contract(const Tensor& out, const std::vector<double>& weights) {
  return sum(mul(out, Tensor::from(out.shape(), weights)));
}

std::vector<double> weights_for(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  return w;
}

struct Case {
  std::vector<Tensor> leaves;
  std::function<Tensor()> f;
};

Case op_case(OpKind kind, Rng& rng) {
  Case c;
  OpAttrs attrs;
  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
      c.leaves = {leaf({3, 4}, rng, -2, 2), leaf({1, 4}, rng, -2, 2)};
      break;
    case OpKind::Div:
      c.leaves = {leaf({3, 4}, rng, -2, 2), leaf({3, 1}, rng, 0.5, 2)};
      break;
    case OpKind::Pow:
      c.leaves = {leaf({3, 4}, rng, 0.5, 2), leaf({3, 4}, rng, -1.5, 1.5)};
      break;
    case OpKind::PowScalar:
      c.leaves = {leaf({3, 4}, rng, 0.5, 2)};
      attrs.scalar = 2.5;
      break;
    case OpKind::Log:
    case OpKind::Sqrt:
      c.leaves = {leaf({3, 4}, rng, 0.5, 2)};
      break;
    case OpKind::Relu:
      c.leaves = {leaf_off_zero({3, 4}, rng, 0.05, 2)};
      break;
    case OpKind::ClampMin:
      c.leaves = {leaf_off_zero({3, 4}, rng, 0.05, 2)};
      attrs.scalar = 0.0;
      break;
    case OpKind::Neg:
    case OpKind::Exp:
    case OpKind::Softplus:
    case OpKind::Transpose:
    case OpKind::Sum:
    case OpKind::Mean:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      break;
    case OpKind::MatMul:
      c.leaves = {leaf({3, 4}, rng, -1, 1), leaf({4, 2}, rng, -1, 1)};
      break;
    case OpKind::Reshape:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.shape = {2, 6};
      break;
    case OpKind::SumAxis:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.axis = 1;
      break;
    case OpKind::MeanAxis:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.axis = 0;
      attrs.keepdim = true;
      break;
    case OpKind::Softmax:
    case OpKind::LogSoftmax:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.axis = 1;
      break;
    case OpKind::MaskedSoftmax: {
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.axis = 1;
      attrs.mask = {1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1};
      break;
    }
    case OpKind::Concat:
      c.leaves = {leaf({2, 3}, rng, -2, 2), leaf({1, 3}, rng, -2, 2)};
      attrs.axis = 0;
      break;
    case OpKind::L2Normalize:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.axis = 1;
      break;
    case OpKind::Gather:
      c.leaves = {leaf({3, 4}, rng, -2, 2)};
      attrs.indices = {0, 5, 5, 11, 7};
      break;
    case OpKind::PairwiseDistance:
      c.leaves = {leaf({5, 3}, rng, -1, 1)};
      break;
  }
  Tensor probe = build_op(kind, c.leaves, attrs);
  auto w = weights_for(probe.numel(), rng);
  if (kind == OpKind::PairwiseDistance) {
    // Both the Euclidean and the squared form.
    auto w2 = weights_for(probe.numel(), rng);
    c.f = [leaves = c.leaves, w, w2] {
      return add(contract(pairwise_distance(leaves[0], false), w),
                 contract(pairwise_distance(leaves[0], true), w2));
    };
  } else {
    c.f = [kind, leaves = c.leaves, attrs, w] {
      return contract(build_op(kind, leaves, attrs), w);
    };
  }
  return c;
}

std::vector<int> pk_ids(std::size_t p, std::size_t k) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) ids.push_back(static_cast<int>(i));
  return ids;
}

Case triplet_case(TripletVariant variant, Rng& rng) {
  Case c;
  c.leaves = {leaf({8, 5}, rng, -1, 1)};
  const auto ids = pk_ids(4, 2);
  TripletConfig cfg;
  cfg.variant = variant;
  cfg.margin = 0.3;
  c.f = [emb = c.leaves[0], ids, cfg] {
    EmbeddingBatch batch{emb, ids, {}};
    return triplet_loss(pairwise_distances(batch, cfg.distance), ids, cfg);
  };
  return c;
}

Case gem_case(Rng& rng) {
  Case c;
  GemLayer layer = GemLayer::per_channel(3);
  std::uniform_real_distribution<double> p(1.5, 4.0);
  for (auto& v : layer.p().mutable_values()) v = p(rng);
  c.leaves = {leaf({3, 5}, rng, 0.01, 1.0), layer.p()};
  auto w = weights_for(3, rng);
  c.f = [x = c.leaves[0], layer, w] { return contract(gem_pool(x, layer), w); };
  return c;
}

Case ce_case(Rng& rng) {
  Case c;
  c.leaves = {leaf({4, 5}, rng, -2, 2)};
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> targets(4);
  for (auto& t : targets) t = cls(rng);
  c.f = [logits = c.leaves[0], targets] {
    return cross_entropy_smoothed(logits, targets, {0.1, 5});
  };
  return c;
}

struct Named {
  std::string name;
  std::function<Case(Rng&)> make;
};

std::vector<Named> all_cases() {
  std::vector<Named> cases;
  for (OpKind k : registered_ops())
    cases.push_back({std::string(op_name(k)), [k](Rng& r) { return op_case(k, r); }});
  for (auto v : {TripletVariant::Naive, TripletVariant::BatchHard, TripletVariant::BatchSoft,
                 TripletVariant::SoftMargin})
    cases.push_back({"triplet_" + std::string(to_string(v)),
                     [v](Rng& r) { return triplet_case(v, r); }});
  cases.push_back({"gem_pool", gem_case});
  cases.push_back({"cross_entropy_smoothed", ce_case});
  return cases;
}

}  // namespace

std::vector<std::string> gradient_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : all_cases()) names.push_back(c.name);
  return names;
}

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options) {
  std::vector<GradSuiteEntry> out;
  const auto cases = all_cases();
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    if (!options.only.empty() && cases[ci].name != options.only) continue;
    GradSuiteEntry entry;
    entry.name = cases[ci].name;
    entry.pass = true;
    for (std::size_t s = 0; s < options.seeds; ++s) {
      Rng rng(1000003ULL * (s + 1) + ci);
      Case c = cases[ci].make(rng);
      const auto report = finite_diff_check(c.f, c.leaves, options.h, options.tol);
      ++entry.seeds;
      entry.worst_rel_error = std::max(entry.worst_rel_error, report.worst_rel_error);
      if (!report.pass && entry.pass) {
        entry.pass = false;
        entry.message = "seed " + std::to_string(s) + ": " + report.message;
      }
    }
    out.push_back(std::move(entry));
  }
  if (!options.only.empty() && out.empty())
    throw std::invalid_argument("grad-check: unknown case '" + options.only + "'");
  return out;
}

}  // namespace reidlab
