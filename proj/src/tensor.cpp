#include "cdfsl/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace cdfsl {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
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

namespace detail {

std::uint64_t next_seq() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T fill, bool requires_grad) {
  const auto n = cdfsl::numel(shape);
  if (n < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value.assign(static_cast<std::size_t>(n), fill);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

template <typename T>
TensorT<T> TensorT<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (cdfsl::numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

template <typename T>
TensorT<T> TensorT<T>::scalar(T v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

template <typename T>
const std::vector<T>& TensorT<T>::grad() const {
  if (!has_grad()) {
    throw ContractError("gradient requested before any backward pass touched this tensor");
  }
  return node_->grad;
}

template <typename T>
T TensorT<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() requires a scalar, got shape " + shape_str(node_->shape));
  }
  return node_->value[0];
}

template <typename T>
void backward(const TensorT<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  }
  auto* root = loss.node();
  if (!root->requires_grad) return;  // nothing reachable needs gradients

  // Collect reachable grad-requiring nodes, then replay in reverse recording
  // order. Sequence numbers make the traversal independent of DFS order.
  std::vector<detail::Node<T>*> nodes;
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<detail::Node<T>*> stack{root};
  visited.insert(root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (n->backward_fn) nodes.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && visited.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto* a, const auto* b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto* n : nodes) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

template class TensorT<float>;
template class TensorT<double>;
template void backward(const TensorT<float>&);
template void backward(const TensorT<double>&);

}  // namespace cdfsl
