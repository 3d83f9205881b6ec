#include "cdfsl/optim.hpp"

#include <cmath>

namespace cdfsl {

template <typename T>
AdamT<T>::AdamT(std::vector<TensorT<T>> params, T lr, T beta1, T beta2, T eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.data().size(), T(0));
    v_.emplace_back(p.data().size(), T(0));
  }
}

template <typename T>
void AdamT<T>::step() {
  ++t_;
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = params_[pi];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    if (g.size() != p.data().size()) {
      throw DimensionError("adam: gradient length " + std::to_string(g.size()) +
                           " does not match parameter length " + std::to_string(p.data().size()));
    }
    auto& m = m_[pi];
    auto& v = v_[pi];
    auto& x = p.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (T(1) - beta2_) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      x[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

template <typename T>
void AdamT<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class AdamT<float>;
template class AdamT<double>;

}  // namespace cdfsl
