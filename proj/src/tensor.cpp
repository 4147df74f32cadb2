#include "pmp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace pmp {
PMP_PRECISION_BEGIN

namespace {

std::atomic<std::uint64_t> g_order{0};

std::uint64_t next_order() { return g_order.fetch_add(1, std::memory_order_relaxed) + 1; }

void check_shape(const Shape& shape, std::size_t n) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != n) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " + std::to_string(n) +
                         " values");
  }
}

}  // namespace

std::vector<Real>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), Real(0));
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad) {
  check_shape(shape, values.size());
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->order = next_order();
  node_->op = "leaf";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<Real>{value}, requires_grad);
}

Tensor Tensor::from_op(std::string op, Shape shape, std::vector<Real> values,
                       const std::vector<Tensor>& inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values), false);
  out.node_->op = std::move(op);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) out.node_->inputs.push_back(t.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

detail::Node& Tensor::node() const {
  if (!node_) throw UsageError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node().value.size(); }

std::span<const Real> Tensor::values() const { return node().value; }

std::span<Real> Tensor::mutable_values() { return node().value; }

Real Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
  return node().value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const Real> Tensor::grad() const { return node().grad; }

void Tensor::zero_grad() { node().grad.clear(); }

const std::string& Tensor::op() const { return node().op; }

std::uint64_t Tensor::order() const { return node().order; }

Tensor Tensor::leaf_copy(bool requires_grad) const {
  return Tensor(shape(), node().value, requires_grad);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar root, got shape " + shape_string(shape()));
  }
  const Real one = 1;
  backward(std::span<const Real>(&one, 1));
}

void Tensor::backward(std::span<const Real> seed) const {
  detail::Node& root = node();
  if (seed.size() != root.value.size()) {
    throw DimensionError("backward seed has " + std::to_string(seed.size()) +
                         " values for tensor of shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Collect every differentiable node reachable from the root.
  std::vector<detail::Node*> nodes;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{&root};
  seen.insert(&root);
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->order > b->order; });

  // Interior gradients are recomputed on every sweep; leaves accumulate.
  for (detail::Node* n : nodes) {
    if (n->backward) n->grad.clear();
  }
  auto& g = root.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

  for (detail::Node* n : nodes) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

PMP_PRECISION_END
}  // namespace pmp
