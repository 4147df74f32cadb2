#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pmp/errors.hpp"
#include "pmp/real.hpp"

namespace pmp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

PMP_PRECISION_BEGIN

namespace detail {

// One entry of the gradient tape. Nodes are ordered by creation, so a reverse
// sweep over `order` is a valid topological order of the graph.
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::uint64_t order = 0;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  std::vector<Real>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor handle. Copies share the underlying node; values are
/// immutable once the tensor has been used as an operation input.
class Tensor {
 public:
  using BackwardFn = std::function<void(detail::Node&)>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  // Records an operation result. Inputs and the backward rule are kept only
  // when at least one input participates in differentiation.
  static Tensor from_op(std::string op, Shape shape, std::vector<Real> values,
                        const std::vector<Tensor>& inputs, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const Real> values() const;
  // Direct write access; intended for leaves (parameters, inputs) only.
  std::span<Real> mutable_values();
  Real item() const;
  Real at(std::size_t i) const { return values()[i]; }
  Real at(std::size_t i, std::size_t j) const { return values()[i * dim(1) + j]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const Real> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from a scalar root with seed 1.
  void backward() const;
  /// Vector-Jacobian product: seeds this tensor's gradient with `seed`.
  void backward(std::span<const Real> seed) const;

  /// New leaf holding a copy of the values.
  Tensor leaf_copy(bool requires_grad) const;
  /// Alias for leaf_copy(false).
  Tensor detached() const { return leaf_copy(false); }

  const std::string& op() const;
  std::uint64_t order() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;
};

PMP_PRECISION_END
}  // namespace pmp
