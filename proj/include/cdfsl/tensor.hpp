#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cdfsl/errors.hpp"

namespace cdfsl {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One recorded tape node. Nodes carry a monotonically increasing sequence
/// number; a backward pass visits reachable nodes exactly once in decreasing
/// sequence order, which is the reverse of recording order.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily, same length as value once touched
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into inputs

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

std::uint64_t next_seq();
bool& grad_mode_flag();

}  // namespace detail

/// Returns true when operations record backward rules on the tape.
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// RAII guard disabling tape recording in the current thread.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense n-dimensional array with reverse-mode gradient support. A TensorT is
/// a cheap handle onto a shared node; copies alias the same storage.
template <typename T>
class TensorT {
 public:
  using Scalar = T;

  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false);
  static TensorT full(Shape shape, T fill, bool requires_grad = false);
  static TensorT from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static TensorT scalar(T v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rank() const { return node_->shape.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  /// Flips the leaf grad flag; used to freeze trained teacher parameters.
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const std::vector<T>& grad() const;
  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
  }

  T item() const;

  /// Value copy detached from the tape.
  TensorT detach_copy() const { return from_data(node_->shape, node_->value, false); }

  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

  static TensorT wrap(std::shared_ptr<detail::Node<T>> n) {
    TensorT t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Runs reverse-mode accumulation from a scalar loss. Gradients of all
/// requires_grad ancestors are accumulated (+=); repeated calls without
/// zero_grad keep accumulating.
template <typename T>
void backward(const TensorT<T>& loss);

using Tensor = TensorT<float>;

extern template class TensorT<float>;
extern template class TensorT<double>;
extern template void backward(const TensorT<float>&);
extern template void backward(const TensorT<double>&);

}  // namespace cdfsl
