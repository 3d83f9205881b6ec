#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cdfsl/tensor.hpp"

namespace cdfsl::detail {

/// Builds an op output node. When grad mode is on and any input requires
/// gradients, the node is recorded on the tape with the given backward rule;
/// otherwise the output is a plain detached value.
template <typename T>
TensorT<T> make_op(Shape shape, std::vector<T> value,
                   std::vector<std::shared_ptr<Node<T>>> inputs,
                   std::function<void(Node<T>&)> backward_fn);

}  // namespace cdfsl::detail
