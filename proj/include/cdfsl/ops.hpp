#pragma once

#include <cstdint>
#include <vector>

#include "cdfsl/rng.hpp"
#include "cdfsl/tensor.hpp"

namespace cdfsl {

// Elementwise binary ops broadcast three ways: exact shape, scalar [1]
// against anything, and per-channel [C] against [N,C,...] (dim 1).
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

/// Multiply by a compile-time constant (not a learnable scalar).
template <typename T>
TensorT<T> scale(const TensorT<T>& x, T factor);

template <typename T>
TensorT<T> relu(const TensorT<T>& x);

template <typename T>
TensorT<T> exp(const TensorT<T>& x);

/// [m,k] x [k,n] -> [m,n].
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

/// Cross-correlation with zero padding. x: [b,c_in,h,w], kernel:
/// [c_out,c_in,kh,kw] -> [b,c_out,h',w'] with h' = (h+2p-kh)/stride + 1.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, std::int64_t stride = 1,
                  std::int64_t padding = 0);

/// Row-wise log-softmax over the class axis of [n,c].
template <typename T>
TensorT<T> log_softmax(const TensorT<T>& x);

/// Mean over rows of -log_probs[i, labels[i]].
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& log_probs, const std::vector<std::int64_t>& labels);

/// mean_i sum_c teacher*(log teacher - student_log_probs). Teacher rows must
/// be valid distributions; gradients reach the student argument only.
template <typename T>
TensorT<T> kl_div(const TensorT<T>& student_log_probs, const TensorT<T>& teacher_probs);

/// Row-wise Gumbel-softmax sample of [n,k] logits. With hard=true the forward
/// value is the one-hot argmax while the backward rule is that of the soft
/// sample (straight-through).
template <typename T>
TensorT<T> gumbel_softmax(const TensorT<T>& logits, T tau, Rng& rng, bool hard);

/// Per-channel batch normalization of [n,c,h,w]. Training mode normalizes by
/// batch statistics and updates the running buffers in place; eval mode
/// normalizes by the running buffers.
template <typename T>
TensorT<T> batch_norm_2d(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                         std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                         T momentum = T(0.1), T eps = T(1e-5));

/// 2x2-style max pooling; ties resolve to the first element scanned.
template <typename T>
TensorT<T> max_pool_2d(const TensorT<T>& x, std::int64_t kernel = 2, std::int64_t stride = 2);

/// [b,c,h,w] -> [b,c] spatial mean.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x);

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape new_shape);

/// Concatenate along the leading axis; trailing extents must agree.
template <typename T>
TensorT<T> concat_rows(const std::vector<TensorT<T>>& parts);

/// Rows [begin, end) along the leading axis.
template <typename T>
TensorT<T> slice_rows(const TensorT<T>& x, std::int64_t begin, std::int64_t end);

/// Column col of [n,c] as an [n] vector.
template <typename T>
TensorT<T> select_column(const TensorT<T>& x, std::int64_t col);

/// Per-group mean of rows: x [n,d] with groups[i] in [0,num_groups) ->
/// [num_groups,d]. Every group must be populated.
template <typename T>
TensorT<T> group_mean(const TensorT<T>& x, const std::vector<std::int64_t>& groups,
                      std::int64_t num_groups);

/// Squared Euclidean distances: a [n,d], b [m,d] -> [n,m].
template <typename T>
TensorT<T> pairwise_sqdist(const TensorT<T>& a, const TensorT<T>& b);

/// Value pass-through with the tape cut.
template <typename T>
TensorT<T> detach(const TensorT<T>& x);

template <typename T>
TensorT<T> sum(const TensorT<T>& x);

#define CDFSL_EXTERN_OPS(T)                                                                       \
  extern template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                           \
  extern template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                           \
  extern template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                           \
  extern template TensorT<T> scale(const TensorT<T>&, T);                                         \
  extern template TensorT<T> relu(const TensorT<T>&);                                             \
  extern template TensorT<T> exp(const TensorT<T>&);                                              \
  extern template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                        \
  extern template TensorT<T> conv2d(const TensorT<T>&, const TensorT<T>&, std::int64_t,           \
                                    std::int64_t);                                                \
  extern template TensorT<T> log_softmax(const TensorT<T>&);                                      \
  extern template TensorT<T> cross_entropy(const TensorT<T>&, const std::vector<std::int64_t>&); \
  extern template TensorT<T> kl_div(const TensorT<T>&, const TensorT<T>&);                        \
  extern template TensorT<T> gumbel_softmax(const TensorT<T>&, T, Rng&, bool);                    \
  extern template TensorT<T> batch_norm_2d(const TensorT<T>&, const TensorT<T>&,                  \
                                           const TensorT<T>&, std::vector<T>&, std::vector<T>&,  \
                                           bool, T, T);                                           \
  extern template TensorT<T> max_pool_2d(const TensorT<T>&, std::int64_t, std::int64_t);          \
  extern template TensorT<T> global_avg_pool(const TensorT<T>&);                                  \
  extern template TensorT<T> reshape(const TensorT<T>&, Shape);                                   \
  extern template TensorT<T> concat_rows(const std::vector<TensorT<T>>&);                         \
  extern template TensorT<T> slice_rows(const TensorT<T>&, std::int64_t, std::int64_t);           \
  extern template TensorT<T> select_column(const TensorT<T>&, std::int64_t);                      \
  extern template TensorT<T> group_mean(const TensorT<T>&, const std::vector<std::int64_t>&,      \
                                        std::int64_t);                                            \
  extern template TensorT<T> pairwise_sqdist(const TensorT<T>&, const TensorT<T>&);               \
  extern template TensorT<T> detach(const TensorT<T>&);                                           \
  extern template TensorT<T> sum(const TensorT<T>&);

CDFSL_EXTERN_OPS(float)
CDFSL_EXTERN_OPS(double)
#undef CDFSL_EXTERN_OPS

}  // namespace cdfsl
