#include "gbu/nn/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace gbu::nn {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
void backward(const Tensor<T>& loss) {
  require(loss.numel() == 1, ErrorCode::kContract,
          "backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reverse of the result is a topological order.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<const TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node_ptr().get(), 0);
  visited.insert(loss.node_ptr().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node().grad_data()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace gbu::nn
