#include "cdfsl/ops.hpp"

#include <algorithm>
#include <cmath>

#include "op_common.hpp"

namespace cdfsl {

namespace {

// Broadcast pattern for elementwise binaries: exact shape, scalar [1], or
// per-channel [C] against [N,C,...].
struct BinaryPlan {
  enum Kind { kExact, kScalar, kChannel } kind = kExact;
  bool swapped = false;  // true when `a` is the small operand
  std::int64_t outer = 0, channels = 0, inner = 0;
};

BinaryPlan plan_binary(const Shape& a, const Shape& b, const char* op) {
  BinaryPlan plan;
  if (a == b) {
    plan.kind = BinaryPlan::kExact;
    return plan;
  }
  const auto is_scalar = [](const Shape& s) { return numel(s) == 1; };
  if (is_scalar(b) || is_scalar(a)) {
    plan.kind = BinaryPlan::kScalar;
    plan.swapped = is_scalar(a) && !is_scalar(b);
    return plan;
  }
  const auto channel_fit = [](const Shape& big, const Shape& small) {
    return small.size() == 1 && big.size() >= 2 && big[1] == small[0];
  };
  if (channel_fit(a, b) || channel_fit(b, a)) {
    plan.kind = BinaryPlan::kChannel;
    plan.swapped = channel_fit(b, a);
    const Shape& big = plan.swapped ? b : a;
    plan.outer = big[0];
    plan.channels = big[1];
    plan.inner = 1;
    for (std::size_t i = 2; i < big.size(); ++i) plan.inner *= big[i];
    return plan;
  }
  throw DimensionError(std::string(op) + ": shapes not broadcastable: " + shape_str(a) + " vs " +
                       shape_str(b));
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  const BinaryPlan plan = plan_binary(a.shape(), b.shape(), "add");
  const TensorT<T>& big = plan.swapped ? b : a;
  const TensorT<T>& small = plan.swapped ? a : b;
  std::vector<T> out(big.data());
  switch (plan.kind) {
    case BinaryPlan::kExact:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += small.data()[i];
      break;
    case BinaryPlan::kScalar: {
      const T s = small.data()[0];
      for (auto& v : out) v += s;
      break;
    }
    case BinaryPlan::kChannel: {
      std::size_t idx = 0;
      for (std::int64_t n = 0; n < plan.outer; ++n)
        for (std::int64_t c = 0; c < plan.channels; ++c) {
          const T s = small.data()[static_cast<std::size_t>(c)];
          for (std::int64_t j = 0; j < plan.inner; ++j) out[idx++] += s;
        }
      break;
    }
  }
  auto bign = big.node_ptr();
  auto smalln = small.node_ptr();
  return detail::make_op<T>(big.shape(), std::move(out), {bign, smalln},
                            [bign, smalln, plan](detail::Node<T>& self) {
                              if (bign->requires_grad) {
                                bign->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  bign->grad[i] += self.grad[i];
                              }
                              if (!smalln->requires_grad) return;
                              smalln->ensure_grad();
                              if (plan.kind == BinaryPlan::kExact) {
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  smalln->grad[i] += self.grad[i];
                              } else if (plan.kind == BinaryPlan::kScalar) {
                                T acc = T(0);
                                for (const T g : self.grad) acc += g;
                                smalln->grad[0] += acc;
                              } else {
                                std::size_t idx = 0;
                                for (std::int64_t n = 0; n < plan.outer; ++n)
                                  for (std::int64_t c = 0; c < plan.channels; ++c) {
                                    T acc = T(0);
                                    for (std::int64_t j = 0; j < plan.inner; ++j)
                                      acc += self.grad[idx++];
                                    smalln->grad[static_cast<std::size_t>(c)] += acc;
                                  }
                              }
                            });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  const BinaryPlan plan = plan_binary(a.shape(), b.shape(), "mul");
  const TensorT<T>& big = plan.swapped ? b : a;
  const TensorT<T>& small = plan.swapped ? a : b;
  std::vector<T> out(big.data());
  switch (plan.kind) {
    case BinaryPlan::kExact:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= small.data()[i];
      break;
    case BinaryPlan::kScalar: {
      const T s = small.data()[0];
      for (auto& v : out) v *= s;
      break;
    }
    case BinaryPlan::kChannel: {
      std::size_t idx = 0;
      for (std::int64_t n = 0; n < plan.outer; ++n)
        for (std::int64_t c = 0; c < plan.channels; ++c) {
          const T s = small.data()[static_cast<std::size_t>(c)];
          for (std::int64_t j = 0; j < plan.inner; ++j) out[idx++] *= s;
        }
      break;
    }
  }
  auto bign = big.node_ptr();
  auto smalln = small.node_ptr();
  return detail::make_op<T>(
      big.shape(), std::move(out), {bign, smalln}, [bign, smalln, plan](detail::Node<T>& self) {
        if (bign->requires_grad) {
          bign->ensure_grad();
          if (plan.kind == BinaryPlan::kExact) {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
              bign->grad[i] += self.grad[i] * smalln->value[i];
          } else if (plan.kind == BinaryPlan::kScalar) {
            const T s = smalln->value[0];
            for (std::size_t i = 0; i < self.grad.size(); ++i) bign->grad[i] += self.grad[i] * s;
          } else {
            std::size_t idx = 0;
            for (std::int64_t n = 0; n < plan.outer; ++n)
              for (std::int64_t c = 0; c < plan.channels; ++c) {
                const T s = smalln->value[static_cast<std::size_t>(c)];
                for (std::int64_t j = 0; j < plan.inner; ++j, ++idx)
                  bign->grad[idx] += self.grad[idx] * s;
              }
          }
        }
        if (!smalln->requires_grad) return;
        smalln->ensure_grad();
        if (plan.kind == BinaryPlan::kExact) {
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            smalln->grad[i] += self.grad[i] * bign->value[i];
        } else if (plan.kind == BinaryPlan::kScalar) {
          T acc = T(0);
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            acc += self.grad[i] * bign->value[i];
          smalln->grad[0] += acc;
        } else {
          std::size_t idx = 0;
          for (std::int64_t n = 0; n < plan.outer; ++n)
            for (std::int64_t c = 0; c < plan.channels; ++c) {
              T acc = T(0);
              for (std::int64_t j = 0; j < plan.inner; ++j, ++idx)
                acc += self.grad[idx] * bign->value[idx];
              smalln->grad[static_cast<std::size_t>(c)] += acc;
            }
        }
      });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T factor) {
  std::vector<T> out(x.data());
  for (auto& v : out) v *= factor;
  auto xn = x.node_ptr();
  return detail::make_op<T>(x.shape(), std::move(out), {xn},
                            [xn, factor](detail::Node<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] += self.grad[i] * factor;
                            });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  std::vector<T> out(x.data());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  auto xn = x.node_ptr();
  return detail::make_op<T>(x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->value[i] > T(0)) xn->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
TensorT<T> exp(const TensorT<T>& x) {
  std::vector<T> out(x.data());
  for (auto& v : out) v = std::exp(v);
  auto xn = x.node_ptr();
  return detail::make_op<T>(x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += self.grad[i] * self.value[i];
  });
}

template <typename T>
TensorT<T> log_softmax(const TensorT<T>& x) {
  if (x.rank() != 2 || x.dim(1) < 1) {
    throw DimensionError("log_softmax expects [n,c] with c >= 1, got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.data());
  for (std::int64_t i = 0; i < n; ++i) {
    T* row = out.data() + i * c;
    T mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (std::int64_t j = 0; j < c; ++j) lse += std::exp(static_cast<double>(row[j] - mx));
    const T shift = mx + static_cast<T>(std::log(lse));
    for (std::int64_t j = 0; j < c; ++j) row[j] -= shift;
  }
  auto xn = x.node_ptr();
  return detail::make_op<T>({n, c}, std::move(out), {xn}, [xn, n, c](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const T* g = self.grad.data() + i * c;
      const T* o = self.value.data() + i * c;
      T gsum = T(0);
      for (std::int64_t j = 0; j < c; ++j) gsum += g[j];
      T* dx = xn->grad.data() + i * c;
      for (std::int64_t j = 0; j < c; ++j) dx[j] += g[j] - std::exp(o[j]) * gsum;
    }
  });
}

template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& log_probs, const std::vector<std::int64_t>& labels) {
  if (log_probs.rank() != 2) {
    throw DimensionError("cross_entropy expects [n,c] log-probs, got " +
                         shape_str(log_probs.shape()));
  }
  const std::int64_t n = log_probs.dim(0), c = log_probs.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw DimensionError("cross_entropy got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t y = labels[i];
    if (y < 0 || y >= c) {
      throw LabelError("label " + std::to_string(y) + " at index " + std::to_string(i) +
                       " outside [0," + std::to_string(c) + ")");
    }
    acc -= static_cast<double>(log_probs.data()[static_cast<std::size_t>(i * c + y)]);
  }
  auto lp = log_probs.node_ptr();
  auto labels_copy = labels;
  return detail::make_op<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {lp},
                            [lp, labels_copy, n, c](detail::Node<T>& self) {
                              lp->ensure_grad();
                              const T g = self.grad[0] / static_cast<T>(n);
                              for (std::int64_t i = 0; i < n; ++i)
                                lp->grad[static_cast<std::size_t>(i * c + labels_copy[i])] -= g;
                            });
}

template <typename T>
TensorT<T> kl_div(const TensorT<T>& student_log_probs, const TensorT<T>& teacher_probs) {
  if (student_log_probs.shape() != teacher_probs.shape() || student_log_probs.rank() != 2) {
    throw DimensionError("kl_div expects matching [n,c] inputs, got " +
                         shape_str(student_log_probs.shape()) + " vs " +
                         shape_str(teacher_probs.shape()));
  }
  const std::int64_t n = student_log_probs.dim(0), c = student_log_probs.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const T t = teacher_probs.data()[static_cast<std::size_t>(i * c + j)];
      if (t < T(0)) {
        throw DistributionError("teacher probability " + std::to_string(t) + " < 0 in row " +
                                std::to_string(i));
      }
      row_sum += static_cast<double>(t);
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw DistributionError("teacher row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum) + ", expected 1");
    }
  }
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      const double t = static_cast<double>(teacher_probs.data()[static_cast<std::size_t>(i * c + j)]);
      if (t <= 0.0) continue;  // 0*log 0 contributes nothing
      const double s = static_cast<double>(student_log_probs.data()[static_cast<std::size_t>(i * c + j)]);
      acc += t * (std::log(t) - s);
    }
  }
  auto sn = student_log_probs.node_ptr();
  auto tvals = teacher_probs.data();  // teacher is detached by contract
  return detail::make_op<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {sn},
                            [sn, tvals, n, c](detail::Node<T>& self) {
                              sn->ensure_grad();
                              const T g = self.grad[0] / static_cast<T>(n);
                              for (std::size_t i = 0; i < tvals.size(); ++i)
                                sn->grad[i] -= g * tvals[i];
                            });
}

template <typename T>
TensorT<T> gumbel_softmax(const TensorT<T>& logits, T tau, Rng& rng, bool hard) {
  if (!(tau > T(0))) throw ParameterError("gumbel_softmax requires tau > 0");
  if (logits.rank() != 2) {
    throw DimensionError("gumbel_softmax expects [n,k] logits, got " + shape_str(logits.shape()));
  }
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  std::vector<T> soft(static_cast<std::size_t>(n * k));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* l = logits.data().data() + i * k;
    T* y = soft.data() + i * k;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t j = 0; j < k; ++j) {
      double u = rng.uniform();
      u = std::min(std::max(u, 1e-10), 1.0 - 1e-10);
      const T noise = static_cast<T>(-std::log(-std::log(u)));
      y[j] = (l[j] + noise) / tau;
      mx = std::max(mx, y[j]);
    }
    double denom = 0.0;
    for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(y[j] - mx));
    for (std::int64_t j = 0; j < k; ++j)
      y[j] = static_cast<T>(std::exp(static_cast<double>(y[j] - mx)) / denom);
  }

  std::vector<T> out;
  if (hard) {
    out.assign(static_cast<std::size_t>(n * k), T(0));
    for (std::int64_t i = 0; i < n; ++i) {
      const T* y = soft.data() + i * k;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < k; ++j) {
        if (y[j] > y[best]) best = j;
      }
      out[static_cast<std::size_t>(i * k + best)] = T(1);
    }
  } else {
    out = soft;
  }

  auto ln = logits.node_ptr();
  // Straight-through: the backward rule is that of the soft sample whether or
  // not the forward value was hardened.
  return detail::make_op<T>({n, k}, std::move(out), {ln},
                            [ln, soft = std::move(soft), tau, n, k](detail::Node<T>& self) {
                              ln->ensure_grad();
                              for (std::int64_t i = 0; i < n; ++i) {
                                const T* y = soft.data() + i * k;
                                const T* g = self.grad.data() + i * k;
                                T dot = T(0);
                                for (std::int64_t j = 0; j < k; ++j) dot += g[j] * y[j];
                                T* dl = ln->grad.data() + i * k;
                                for (std::int64_t j = 0; j < k; ++j)
                                  dl[j] += y[j] * (g[j] - dot) / tau;
                              }
                            });
}

template <typename T>
TensorT<T> batch_norm_2d(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                         std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                         T momentum, T eps) {
  if (x.rank() != 4) {
    throw DimensionError("batch_norm_2d expects [n,c,h,w], got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} ||
      static_cast<std::int64_t>(running_mean.size()) != c ||
      static_cast<std::int64_t>(running_var.size()) != c) {
    throw DimensionError("batch_norm_2d parameter length mismatch for " + shape_str(x.shape()));
  }
  if (!(eps > T(0)) || momentum < T(0) || momentum > T(1)) {
    throw ParameterError("batch_norm_2d requires eps > 0 and momentum in [0,1]");
  }
  const std::int64_t spatial = h * w;
  const std::int64_t m = n * spatial;
  if (m < 1) throw DimensionError("batch_norm_2d requires a non-empty batch");

  std::vector<T> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
  if (training) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* base = x.data().data() + (i * c + ch) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) acc += static_cast<double>(base[s]);
      }
      const double mu = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* base = x.data().data() + (i * c + ch) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          const double d = static_cast<double>(base[s]) - mu;
          vacc += d * d;
        }
      }
      mean[static_cast<std::size_t>(ch)] = static_cast<T>(mu);
      var[static_cast<std::size_t>(ch)] = static_cast<T>(vacc / static_cast<double>(m));
      running_mean[static_cast<std::size_t>(ch)] =
          (T(1) - momentum) * running_mean[static_cast<std::size_t>(ch)] +
          momentum * mean[static_cast<std::size_t>(ch)];
      running_var[static_cast<std::size_t>(ch)] =
          (T(1) - momentum) * running_var[static_cast<std::size_t>(ch)] +
          momentum * var[static_cast<std::size_t>(ch)];
    }
  } else {
    mean.assign(running_mean.begin(), running_mean.end());
    var.assign(running_var.begin(), running_var.end());
  }

  std::vector<T> invstd(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch)
    invstd[static_cast<std::size_t>(ch)] =
        T(1) / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);

  std::vector<T> out(x.data().size());
  std::vector<T> xhat(x.data().size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T mu = mean[static_cast<std::size_t>(ch)];
      const T is = invstd[static_cast<std::size_t>(ch)];
      const T g = gamma.data()[static_cast<std::size_t>(ch)];
      const T b = beta.data()[static_cast<std::size_t>(ch)];
      const T* src = x.data().data() + (i * c + ch) * spatial;
      T* xh = xhat.data() + (i * c + ch) * spatial;
      T* dst = out.data() + (i * c + ch) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) {
        xh[s] = (src[s] - mu) * is;
        dst[s] = xh[s] * g + b;
      }
    }
  }

  auto xn = x.node_ptr();
  auto gn = gamma.node_ptr();
  auto bn = beta.node_ptr();
  auto bwd = [xn, gn, bn, xhat = std::move(xhat), invstd = std::move(invstd), training, n, c,
              spatial, m](detail::Node<T>& self) {
    std::vector<T> sum_g(static_cast<std::size_t>(c), T(0));
    std::vector<T> sum_g_xhat(static_cast<std::size_t>(c), T(0));
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* g = self.grad.data() + (i * c + ch) * spatial;
        const T* xh = xhat.data() + (i * c + ch) * spatial;
        T a1 = T(0), a2 = T(0);
        for (std::int64_t s = 0; s < spatial; ++s) {
          a1 += g[s];
          a2 += g[s] * xh[s];
        }
        sum_g[static_cast<std::size_t>(ch)] += a1;
        sum_g_xhat[static_cast<std::size_t>(ch)] += a2;
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t ch = 0; ch < c; ++ch)
        bn->grad[static_cast<std::size_t>(ch)] += sum_g[static_cast<std::size_t>(ch)];
    }
    if (gn->requires_grad) {
      gn->ensure_grad();
      for (std::int64_t ch = 0; ch < c; ++ch)
        gn->grad[static_cast<std::size_t>(ch)] += sum_g_xhat[static_cast<std::size_t>(ch)];
    }
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T gam = gn->value[static_cast<std::size_t>(ch)];
        const T is = invstd[static_cast<std::size_t>(ch)];
        const T* g = self.grad.data() + (i * c + ch) * spatial;
        const T* xh = xhat.data() + (i * c + ch) * spatial;
        T* dx = xn->grad.data() + (i * c + ch) * spatial;
        if (training) {
          const T inv_m = T(1) / static_cast<T>(m);
          const T sg = sum_g[static_cast<std::size_t>(ch)];
          const T sgx = sum_g_xhat[static_cast<std::size_t>(ch)];
          for (std::int64_t s = 0; s < spatial; ++s)
            dx[s] += gam * is * inv_m * (static_cast<T>(m) * g[s] - sg - xh[s] * sgx);
        } else {
          for (std::int64_t s = 0; s < spatial; ++s) dx[s] += gam * is * g[s];
        }
      }
    }
  };
  return detail::make_op<T>(x.shape(), std::move(out), {xn, gn, bn}, std::move(bwd));
}

template <typename T>
TensorT<T> max_pool_2d(const TensorT<T>& x, std::int64_t kernel, std::int64_t stride) {
  if (x.rank() != 4) {
    throw DimensionError("max_pool_2d expects [n,c,h,w], got " + shape_str(x.shape()));
  }
  if (kernel < 1 || stride < 1) throw ParameterError("max_pool_2d requires kernel, stride >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h || kernel > w) {
    throw DimensionError("max_pool_2d kernel " + std::to_string(kernel) + " exceeds input " +
                         shape_str(x.shape()));
  }
  const std::int64_t ho = (h - kernel) / stride + 1;
  const std::int64_t wo = (w - kernel) / stride + 1;
  std::vector<T> out(static_cast<std::size_t>(n * c * ho * wo));
  std::vector<std::int64_t> argmax(out.size());
  std::size_t oi = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* plane = x.data().data() + (i * c + ch) * h * w;
      const std::int64_t plane_off = (i * c + ch) * h * w;
      for (std::int64_t oh = 0; oh < ho; ++oh) {
        for (std::int64_t ow = 0; ow < wo; ++ow, ++oi) {
          T best = plane[oh * stride * w + ow * stride];
          std::int64_t best_idx = oh * stride * w + ow * stride;
          for (std::int64_t p = 0; p < kernel; ++p) {
            for (std::int64_t q = 0; q < kernel; ++q) {
              const std::int64_t idx = (oh * stride + p) * w + (ow * stride + q);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          }
          out[oi] = best;
          argmax[oi] = plane_off + best_idx;
        }
      }
    }
  }
  auto xn = x.node_ptr();
  return detail::make_op<T>({n, c, ho, wo}, std::move(out), {xn},
                            [xn, argmax = std::move(argmax)](detail::Node<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[static_cast<std::size_t>(argmax[i])] += self.grad[i];
                            });
}

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  if (x.rank() != 4) {
    throw DimensionError("global_avg_pool expects [n,c,h,w], got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* base = x.data().data() + i * spatial;
    double acc = 0.0;
    for (std::int64_t s = 0; s < spatial; ++s) acc += static_cast<double>(base[s]);
    out[static_cast<std::size_t>(i)] = static_cast<T>(acc / static_cast<double>(spatial));
  }
  auto xn = x.node_ptr();
  return detail::make_op<T>({n, c}, std::move(out), {xn}, [xn, spatial](detail::Node<T>& self) {
    xn->ensure_grad();
    const T inv = T(1) / static_cast<T>(spatial);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T g = self.grad[i] * inv;
      T* dst = xn->grad.data() + static_cast<std::int64_t>(i) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) dst[s] += g;
    }
  });
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape new_shape) {
  if (numel(new_shape) != x.numel()) {
    throw DimensionError("reshape from " + shape_str(x.shape()) + " to " + shape_str(new_shape) +
                         " changes element count");
  }
  auto xn = x.node_ptr();
  return detail::make_op<T>(std::move(new_shape), x.data(), {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

template <typename T>
TensorT<T> concat_rows(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows requires at least one input");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw DimensionError("concat_rows requires rank >= 1 inputs");
  std::int64_t rows = 0;
  std::int64_t row_elems = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) row_elems *= shape[i];
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat_rows trailing extents differ: " + shape_str(shape) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(rows * row_elems));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  shape[0] = rows;

  std::vector<std::shared_ptr<detail::Node<T>>> inputs;
  inputs.reserve(parts.size());
  for (const auto& p : parts) inputs.push_back(p.node_ptr());
  return detail::make_op<T>(std::move(shape), std::move(out), inputs,
                            [inputs](detail::Node<T>& self) {
                              std::size_t off = 0;
                              for (const auto& in : inputs) {
                                const std::size_t len = in->value.size();
                                if (in->requires_grad) {
                                  in->ensure_grad();
                                  for (std::size_t i = 0; i < len; ++i)
                                    in->grad[i] += self.grad[off + i];
                                }
                                off += len;
                              }
                            });
}

template <typename T>
TensorT<T> slice_rows(const TensorT<T>& x, std::int64_t begin, std::int64_t end) {
  if (x.rank() < 1 || begin < 0 || end < begin || end > x.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  std::int64_t row_elems = 1;
  for (std::size_t i = 1; i < x.rank(); ++i) row_elems *= x.shape()[i];
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> out(x.data().begin() + begin * row_elems, x.data().begin() + end * row_elems);
  auto xn = x.node_ptr();
  return detail::make_op<T>(std::move(shape), std::move(out), {xn},
                            [xn, begin, row_elems](detail::Node<T>& self) {
                              xn->ensure_grad();
                              const std::size_t off = static_cast<std::size_t>(begin * row_elems);
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[off + i] += self.grad[i];
                            });
}

template <typename T>
TensorT<T> select_column(const TensorT<T>& x, std::int64_t col) {
  if (x.rank() != 2 || col < 0 || col >= x.dim(1)) {
    throw DimensionError("select_column " + std::to_string(col) + " invalid for " +
                         shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = x.data()[static_cast<std::size_t>(i * c + col)];
  auto xn = x.node_ptr();
  return detail::make_op<T>({n}, std::move(out), {xn}, [xn, col, c](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(col)] += self.grad[i];
  });
}

template <typename T>
TensorT<T> group_mean(const TensorT<T>& x, const std::vector<std::int64_t>& groups,
                      std::int64_t num_groups) {
  if (x.rank() != 2) {
    throw DimensionError("group_mean expects [n,d], got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), d = x.dim(1);
  if (static_cast<std::int64_t>(groups.size()) != n) {
    throw DimensionError("group_mean got " + std::to_string(groups.size()) + " group ids for " +
                         std::to_string(n) + " rows");
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_groups), 0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= num_groups) {
      throw LabelError("group id " + std::to_string(groups[i]) + " at index " + std::to_string(i) +
                       " outside [0," + std::to_string(num_groups) + ")");
    }
    ++counts[static_cast<std::size_t>(groups[i])];
  }
  for (std::int64_t g = 0; g < num_groups; ++g) {
    if (counts[static_cast<std::size_t>(g)] == 0) {
      throw EpisodeError("group " + std::to_string(g) + " has no members");
    }
  }
  std::vector<T> out(static_cast<std::size_t>(num_groups * d), T(0));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* src = x.data().data() + i * d;
    T* dst = out.data() + groups[static_cast<std::size_t>(i)] * d;
    for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  for (std::int64_t g = 0; g < num_groups; ++g) {
    const T inv = T(1) / static_cast<T>(counts[static_cast<std::size_t>(g)]);
    T* dst = out.data() + g * d;
    for (std::int64_t j = 0; j < d; ++j) dst[j] *= inv;
  }
  auto xn = x.node_ptr();
  auto groups_copy = groups;
  return detail::make_op<T>(
      {num_groups, d}, std::move(out), {xn},
      [xn, groups_copy, counts = std::move(counts), d](detail::Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < groups_copy.size(); ++i) {
          const std::int64_t g = groups_copy[i];
          const T inv = T(1) / static_cast<T>(counts[static_cast<std::size_t>(g)]);
          const T* gsrc = self.grad.data() + g * d;
          T* dst = xn->grad.data() + static_cast<std::int64_t>(i) * d;
          for (std::int64_t j = 0; j < d; ++j) dst[j] += gsrc[j] * inv;
        }
      });
}

template <typename T>
TensorT<T> pairwise_sqdist(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("pairwise_sqdist expects [n,d] and [m,d], got " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::int64_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n * m));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* ai = a.data().data() + i * d;
    for (std::int64_t j = 0; j < m; ++j) {
      const T* bj = b.data().data() + j * d;
      T acc = T(0);
      for (std::int64_t t = 0; t < d; ++t) {
        const T diff = ai[t] - bj[t];
        acc += diff * diff;
      }
      out[static_cast<std::size_t>(i * m + j)] = acc;
    }
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return detail::make_op<T>({n, m}, std::move(out), {an, bn},
                            [an, bn, n, m, d](detail::Node<T>& self) {
                              if (an->requires_grad) an->ensure_grad();
                              if (bn->requires_grad) bn->ensure_grad();
                              for (std::int64_t i = 0; i < n; ++i) {
                                const T* ai = an->value.data() + i * d;
                                for (std::int64_t j = 0; j < m; ++j) {
                                  const T g2 = T(2) * self.grad[static_cast<std::size_t>(i * m + j)];
                                  if (g2 == T(0)) continue;
                                  const T* bj = bn->value.data() + j * d;
                                  for (std::int64_t t = 0; t < d; ++t) {
                                    const T diff = ai[t] - bj[t];
                                    if (an->requires_grad) an->grad[static_cast<std::size_t>(i * d + t)] += g2 * diff;
                                    if (bn->requires_grad) bn->grad[static_cast<std::size_t>(j * d + t)] -= g2 * diff;
                                  }
                                }
                              }
                            });
}

template <typename T>
TensorT<T> detach(const TensorT<T>& x) {
  return TensorT<T>::from_data(x.shape(), x.data(), false);
}

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  double acc = 0.0;
  for (const T v : x.data()) acc += static_cast<double>(v);
  auto xn = x.node_ptr();
  return detail::make_op<T>({1}, {static_cast<T>(acc)}, {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    const T g = self.grad[0];
    for (auto& v : xn->grad) v += g;
  });
}

#define CDFSL_INSTANTIATE_OPS(T)                                                            \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> scale(const TensorT<T>&, T);                                          \
  template TensorT<T> relu(const TensorT<T>&);                                              \
  template TensorT<T> exp(const TensorT<T>&);                                               \
  template TensorT<T> log_softmax(const TensorT<T>&);                                       \
  template TensorT<T> cross_entropy(const TensorT<T>&, const std::vector<std::int64_t>&);   \
  template TensorT<T> kl_div(const TensorT<T>&, const TensorT<T>&);                         \
  template TensorT<T> gumbel_softmax(const TensorT<T>&, T, Rng&, bool);                     \
  template TensorT<T> batch_norm_2d(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                    std::vector<T>&, std::vector<T>&, bool, T, T);          \
  template TensorT<T> max_pool_2d(const TensorT<T>&, std::int64_t, std::int64_t);           \
  template TensorT<T> global_avg_pool(const TensorT<T>&);                                   \
  template TensorT<T> reshape(const TensorT<T>&, Shape);                                    \
  template TensorT<T> concat_rows(const std::vector<TensorT<T>>&);                          \
  template TensorT<T> slice_rows(const TensorT<T>&, std::int64_t, std::int64_t);            \
  template TensorT<T> select_column(const TensorT<T>&, std::int64_t);                       \
  template TensorT<T> group_mean(const TensorT<T>&, const std::vector<std::int64_t>&,       \
                                 std::int64_t);                                             \
  template TensorT<T> pairwise_sqdist(const TensorT<T>&, const TensorT<T>&);                \
  template TensorT<T> detach(const TensorT<T>&);                                            \
  template TensorT<T> sum(const TensorT<T>&);

CDFSL_INSTANTIATE_OPS(float)
CDFSL_INSTANTIATE_OPS(double)
#undef CDFSL_INSTANTIATE_OPS

}  // namespace cdfsl
