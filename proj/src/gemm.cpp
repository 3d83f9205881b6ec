#include "gemm.hpp"

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cdfsl/ops.hpp"
#include "cdfsl/tensor.hpp"
#include "op_common.hpp"

namespace cdfsl {

namespace detail {

namespace {

inline bool can_parallelize() {
#ifdef _OPENMP
  return !omp_in_parallel();
#else
  return false;
#endif
}

}  // namespace

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  const bool par = can_parallelize() && m * k * n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t n, std::int64_t k) {
  const bool par = can_parallelize() && m * k * n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  const bool par = can_parallelize() && m * k * n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t p = 0; p < k; ++p) {
    T* crow = c + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template void gemm_nn(const float*, const float*, float*, std::int64_t, std::int64_t,
                      std::int64_t);
template void gemm_nn(const double*, const double*, double*, std::int64_t, std::int64_t,
                      std::int64_t);
template void gemm_nt(const float*, const float*, float*, std::int64_t, std::int64_t,
                      std::int64_t);
template void gemm_nt(const double*, const double*, double*, std::int64_t, std::int64_t,
                      std::int64_t);
template void gemm_tn(const float*, const float*, float*, std::int64_t, std::int64_t,
                      std::int64_t);
template void gemm_tn(const double*, const double*, double*, std::int64_t, std::int64_t,
                      std::int64_t);

template <typename T>
TensorT<T> make_op(Shape shape, std::vector<T> value,
                   std::vector<std::shared_ptr<Node<T>>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto out = TensorT<T>::from_data(std::move(shape), std::move(value), false);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (grad_enabled() && needs) {
    auto* n = out.node();
    n->requires_grad = true;
    n->seq = next_seq();
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
  }
  return out;
}

template TensorT<float> make_op(Shape, std::vector<float>,
                                std::vector<std::shared_ptr<Node<float>>>,
                                std::function<void(Node<float>&)>);
template TensorT<double> make_op(Shape, std::vector<double>,
                                 std::vector<std::shared_ptr<Node<double>>>,
                                 std::function<void(Node<double>&)>);

namespace {

// im2col layout: K = c_in*kh*kw rows by ho*wo columns.
template <typename T>
void im2col(const T* x, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t ho,
            std::int64_t wo, T* cols) {
  for (std::int64_t ci = 0; ci < c_in; ++ci) {
    for (std::int64_t p = 0; p < kh; ++p) {
      for (std::int64_t q = 0; q < kw; ++q) {
        T* row = cols + ((ci * kh + p) * kw + q) * (ho * wo);
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t ih = oh * stride - pad + p;
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= h) {
            for (std::int64_t ow = 0; ow < wo; ++ow) dst[ow] = T(0);
            continue;
          }
          const T* src = x + (ci * h + ih) * w;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t iw = ow * stride - pad + q;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* cols, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t ho,
                std::int64_t wo, T* x) {
  for (std::int64_t ci = 0; ci < c_in; ++ci) {
    for (std::int64_t p = 0; p < kh; ++p) {
      for (std::int64_t q = 0; q < kw; ++q) {
        const T* row = cols + ((ci * kh + p) * kw + q) * (ho * wo);
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t ih = oh * stride - pad + p;
          if (ih < 0 || ih >= h) continue;
          T* dst = x + (ci * h + ih) * w;
          const T* src = row + oh * wo;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t iw = ow * stride - pad + q;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

}  // namespace detail

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shapes incompatible: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m * n), T(0));
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);

  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return detail::make_op<T>(
      {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](detail::Node<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          detail::gemm_nt(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          detail::gemm_tn(an->value.data(), self.grad.data(), bn->grad.data(), m, k, n);
        }
      });
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, std::int64_t stride,
                  std::int64_t padding) {
  if (x.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d expects [b,c,h,w] input and [o,c,kh,kw] kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (x.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d channel mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw ParameterError("conv2d requires stride >= 1, padding >= 0");
  const std::int64_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d kernel " + shape_str(kernel.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
  }
  const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::int64_t kdim = c_in * kh * kw;
  const std::int64_t cols_n = ho * wo;

  std::vector<T> out(static_cast<std::size_t>(batch * c_out * cols_n), T(0));
  {
    const T* xd = x.data().data();
    const T* wd = kernel.data().data();
    const bool par = detail::can_parallelize() && batch > 1;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t i = 0; i < batch; ++i) {
      std::vector<T> cols(static_cast<std::size_t>(kdim * cols_n));
      detail::im2col(xd + i * c_in * h * w, c_in, h, w, kh, kw, stride, padding, ho, wo,
                     cols.data());
      detail::gemm_nn(wd, cols.data(), out.data() + i * c_out * cols_n, c_out, kdim, cols_n);
    }
  }

  auto xn = x.node_ptr();
  auto kn = kernel.node_ptr();
  auto bwd = [xn, kn, batch, c_in, h, w, c_out, kh, kw, stride, padding, ho, wo, kdim,
              cols_n](detail::Node<T>& self) {
    const T* gd = self.grad.data();
    if (kn->requires_grad) {
      kn->ensure_grad();
      // Per-thread partials reduced in thread order keep dW deterministic.
      std::vector<std::vector<T>> partials;
#ifdef _OPENMP
      const int max_threads = omp_in_parallel() ? 1 : omp_get_max_threads();
#else
      const int max_threads = 1;
#endif
      partials.assign(static_cast<std::size_t>(max_threads),
                      std::vector<T>(kn->value.size(), T(0)));
      const bool par = detail::can_parallelize() && batch > 1;
#pragma omp parallel for schedule(static) if (par)
      for (std::int64_t i = 0; i < batch; ++i) {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        std::vector<T> cols(static_cast<std::size_t>(kdim * cols_n));
        detail::im2col(xn->value.data() + i * c_in * h * w, c_in, h, w, kh, kw, stride, padding,
                       ho, wo, cols.data());
        detail::gemm_nt(gd + i * c_out * cols_n, cols.data(),
                        partials[static_cast<std::size_t>(tid)].data(), c_out, cols_n, kdim);
      }
      for (const auto& part : partials) {
        for (std::size_t j = 0; j < part.size(); ++j) kn->grad[j] += part[j];
      }
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      const T* wd = kn->value.data();
      const bool par = detail::can_parallelize() && batch > 1;
#pragma omp parallel for schedule(static) if (par)
      for (std::int64_t i = 0; i < batch; ++i) {
        std::vector<T> dcols(static_cast<std::size_t>(kdim * cols_n), T(0));
        detail::gemm_tn(wd, gd + i * c_out * cols_n, dcols.data(), c_out, kdim, cols_n);
        detail::col2im_acc(dcols.data(), c_in, h, w, kh, kw, stride, padding, ho, wo,
                           xn->grad.data() + i * c_in * h * w);
      }
    }
  };
  return detail::make_op<T>({batch, c_out, ho, wo}, std::move(out), {xn, kn}, std::move(bwd));
}

#define CDFSL_INSTANTIATE(T)                                                        \
  template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                 \
  template TensorT<T> conv2d(const TensorT<T>&, const TensorT<T>&, std::int64_t, std::int64_t);

CDFSL_INSTANTIATE(float)
CDFSL_INSTANTIATE(double)
#undef CDFSL_INSTANTIATE

}  // namespace cdfsl
