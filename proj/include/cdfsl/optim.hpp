#pragma once

#include <cstdint>
#include <vector>

#include "cdfsl/tensor.hpp"

namespace cdfsl {

/// Adam with bias correction. Parameters without an accumulated gradient are
/// skipped by a step (their moment buffers stay untouched too).
template <typename T>
class AdamT {
 public:
  explicit AdamT(std::vector<TensorT<T>> params, T lr = T(0.001), T beta1 = T(0.9),
                 T beta2 = T(0.999), T eps = T(1e-8));

  void step();
  void zero_grad();

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }

  const std::vector<TensorT<T>>& params() const { return params_; }
  // Moment buffers and step count are exposed for checkpointing.
  std::vector<std::vector<T>>& m() { return m_; }
  std::vector<std::vector<T>>& v() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<TensorT<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

using Adam = AdamT<float>;

extern template class AdamT<float>;
extern template class AdamT<double>;

}  // namespace cdfsl
