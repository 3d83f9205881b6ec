#pragma once

#include <cstdint>
#include <vector>

#include "cdfsl/ops.hpp"
#include "cdfsl/rng.hpp"
#include "cdfsl/tensor.hpp"

namespace cdfsl {

/// Training-only linear classifier over a dataset's full class set.
template <typename T>
struct GlobalClassifierT {
  TensorT<T> weight;  // [feature_dim, class_count]
  TensorT<T> bias;    // [class_count]

  static GlobalClassifierT init(std::int64_t feature_dim, std::int64_t class_count, Rng& rng);
  TensorT<T> logits(const TensorT<T>& feats) const;
  std::int64_t class_count() const { return bias.dim(0); }
  GlobalClassifierT clone() const;
};

/// Cross-entropy of the classifier's logits against global labels.
template <typename T>
TensorT<T> global_loss(const GlobalClassifierT<T>& f, const TensorT<T>& feats,
                       const std::vector<std::int64_t>& labels);

/// Prototype metric head: class prototypes are support means; query scores
/// are negative squared distances divided by a learnable positive
/// temperature (parameterized as exp(log_temp)).
template <typename T>
struct MetricHeadT {
  TensorT<T> log_temp;  // [1]

  static MetricHeadT init(T temperature = T(10));
  /// support_feats [N*K, d] with fsl labels, query_feats [Q, d] ->
  /// log-probabilities [Q, N]. Every class must appear exactly K times.
  TensorT<T> predict(const TensorT<T>& support_feats,
                     const std::vector<std::int64_t>& support_fsl_labels, std::int64_t n_way,
                     const TensorT<T>& query_feats) const;
  T temperature() const;
  MetricHeadT clone() const;
};

/// FSL classification loss; identical arithmetic to cross_entropy.
template <typename T>
TensorT<T> fsl_loss(const TensorT<T>& log_probs, const std::vector<std::int64_t>& query_fsl_labels) {
  return cross_entropy(log_probs, query_fsl_labels);
}

using GlobalClassifier = GlobalClassifierT<float>;
using MetricHead = MetricHeadT<float>;

extern template struct GlobalClassifierT<float>;
extern template struct GlobalClassifierT<double>;
extern template struct MetricHeadT<float>;
extern template struct MetricHeadT<double>;
extern template TensorT<float> global_loss(const GlobalClassifierT<float>&, const TensorT<float>&,
                                           const std::vector<std::int64_t>&);
extern template TensorT<double> global_loss(const GlobalClassifierT<double>&,
                                            const TensorT<double>&,
                                            const std::vector<std::int64_t>&);

}  // namespace cdfsl
