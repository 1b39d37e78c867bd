#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gbu/common/error.hpp"

namespace gbu::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

enum class Mode { kTrain, kEval };

template <typename T>
struct TensorNode;

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

/// Backward closures read the node's own grad and accumulate into their parents.
/// They must not capture the node itself (the parents vector keeps inputs alive).
template <typename T>
using BackwardFn = std::function<void(const TensorNode<T>&)>;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr<T>> parents;
  BackwardFn<T> backward;

  T* grad_data() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad.data();
  }
};

/// Thread-local switch; while disabled, ops record no graph edges.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array with reference semantics: copies share storage and
/// graph position, `clone()` makes an independent leaf.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T{0}, requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<T>(n, fill), requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    validate(shape, data.size());
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  explicit Tensor(NodePtr<T> node) : node_(std::move(node)) {}

  [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(node_); }
  [[nodiscard]] const Shape& shape() const { return node().shape; }
  [[nodiscard]] std::size_t rank() const { return node().shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
  [[nodiscard]] std::size_t numel() const { return node().value.size(); }

  [[nodiscard]] std::span<const T> data() const { return node().value; }
  [[nodiscard]] std::span<T> mutable_data() { return node().value; }
  [[nodiscard]] const std::vector<T>& values() const { return node().value; }

  [[nodiscard]] bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag) { node().requires_grad = flag; }

  [[nodiscard]] bool has_grad() const { return !node().grad.empty(); }
  /// Empty span when no gradient has been accumulated.
  [[nodiscard]] std::span<const T> grad() const { return node().grad; }
  void zero_grad() const { node().grad.clear(); }

  [[nodiscard]] T item() const {
    require(numel() == 1, ErrorCode::kContract, "item() on tensor of shape " + shape_string(shape()));
    return node().value[0];
  }

  [[nodiscard]] T at(std::size_t i) const { return node().value.at(i); }

  /// Independent leaf with copied values; gradient and graph history are dropped.
  [[nodiscard]] Tensor clone() const {
    return from_data(shape(), node().value, requires_grad());
  }

  /// Shares nothing with the graph; same values, no gradient tracking.
  [[nodiscard]] Tensor detach() const { return from_data(shape(), node().value, false); }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    std::vector<U> out(node().value.begin(), node().value.end());
    return Tensor<U>::from_data(shape(), std::move(out), requires_grad());
  }

  /// Reverse-mode sweep from this scalar.
  void backward() const;

  [[nodiscard]] const NodePtr<T>& node_ptr() const { return node_; }
  [[nodiscard]] TensorNode<T>& node() const {
    require(defined(), ErrorCode::kContract, "use of undefined tensor");
    return *node_;
  }

 private:
  static void validate(const Shape& shape, std::size_t size) {
    require(!shape.empty(), ErrorCode::kDimension, "tensor shape must have at least one axis");
    for (std::size_t extent : shape) {
      require(extent > 0, ErrorCode::kDimension, "zero extent in shape " + shape_string(shape));
    }
    require(shape_numel(shape) == size, ErrorCode::kDimension,
            "data length " + std::to_string(size) + " does not match shape " + shape_string(shape));
  }

  NodePtr<T> node_;
};

/// Populates `grad` on every requires_grad leaf reachable from `loss`.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T>
void Tensor<T>::backward() const {
  nn::backward(*this);
}

/// Builds an op output. Graph edges are recorded only when gradients are
/// enabled and at least one parent requires them.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                      BackwardFn<T> backward_fn) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = false;
  if (grad_enabled()) {
    for (const auto& p : parents) any = any || p->requires_grad;
  }
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

}  // namespace gbu::nn
