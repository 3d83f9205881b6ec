#include "cdfsl/heads.hpp"

#include <cmath>

#include "cdfsl/errors.hpp"

namespace cdfsl {

template <typename T>
GlobalClassifierT<T> GlobalClassifierT<T>::init(std::int64_t feature_dim,
                                                std::int64_t class_count, Rng& rng) {
  if (feature_dim < 1 || class_count < 1) {
    throw ConfigError("global classifier requires positive feature_dim and class_count");
  }
  GlobalClassifierT f;
  std::vector<T> w(static_cast<std::size_t>(feature_dim * class_count));
  const T stddev = static_cast<T>(std::sqrt(1.0 / static_cast<double>(feature_dim)));
  for (auto& v : w) v = static_cast<T>(rng.normal(0.0, 1.0)) * stddev;
  f.weight = TensorT<T>::from_data({feature_dim, class_count}, std::move(w), true);
  f.bias = TensorT<T>::full({class_count}, T(0), true);
  return f;
}

template <typename T>
TensorT<T> GlobalClassifierT<T>::logits(const TensorT<T>& feats) const {
  return add(matmul(feats, weight), bias);
}

template <typename T>
GlobalClassifierT<T> GlobalClassifierT<T>::clone() const {
  GlobalClassifierT f;
  f.weight = TensorT<T>::from_data(weight.shape(), weight.data(), weight.requires_grad());
  f.bias = TensorT<T>::from_data(bias.shape(), bias.data(), bias.requires_grad());
  return f;
}

template <typename T>
TensorT<T> global_loss(const GlobalClassifierT<T>& f, const TensorT<T>& feats,
                       const std::vector<std::int64_t>& labels) {
  return cross_entropy(log_softmax(f.logits(feats)), labels);
}

template <typename T>
MetricHeadT<T> MetricHeadT<T>::init(T temperature) {
  if (!(temperature > T(0))) throw ParameterError("metric head temperature must be positive");
  MetricHeadT h;
  h.log_temp = TensorT<T>::from_data({1}, {static_cast<T>(std::log(temperature))}, true);
  return h;
}

template <typename T>
T MetricHeadT<T>::temperature() const {
  return static_cast<T>(std::exp(log_temp.data()[0]));
}

template <typename T>
MetricHeadT<T> MetricHeadT<T>::clone() const {
  MetricHeadT h;
  h.log_temp = TensorT<T>::from_data(log_temp.shape(), log_temp.data(), log_temp.requires_grad());
  return h;
}

template <typename T>
TensorT<T> MetricHeadT<T>::predict(const TensorT<T>& support_feats,
                                   const std::vector<std::int64_t>& support_fsl_labels,
                                   std::int64_t n_way, const TensorT<T>& query_feats) const {
  if (n_way < 1) throw EpisodeError("n_way must be positive");
  if (support_feats.rank() != 2 ||
      support_feats.dim(0) != static_cast<std::int64_t>(support_fsl_labels.size())) {
    throw DimensionError("support features " + shape_str(support_feats.shape()) +
                         " do not match " + std::to_string(support_fsl_labels.size()) +
                         " labels");
  }
  if (support_feats.dim(0) % n_way != 0) {
    throw EpisodeError("support size " + std::to_string(support_feats.dim(0)) +
                       " is not a multiple of n_way " + std::to_string(n_way));
  }
  const std::int64_t k_shot = support_feats.dim(0) / n_way;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_way), 0);
  for (std::size_t i = 0; i < support_fsl_labels.size(); ++i) {
    const auto y = support_fsl_labels[i];
    if (y < 0 || y >= n_way) {
      throw LabelError("fsl label " + std::to_string(y) + " at index " + std::to_string(i) +
                       " outside [0," + std::to_string(n_way) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::int64_t cls = 0; cls < n_way; ++cls) {
    if (counts[static_cast<std::size_t>(cls)] != k_shot) {
      throw EpisodeError("class " + std::to_string(cls) + " appears " +
                         std::to_string(counts[static_cast<std::size_t>(cls)]) +
                         " times in support, expected " + std::to_string(k_shot));
    }
  }
  const auto prototypes = group_mean(support_feats, support_fsl_labels, n_way);
  const auto dists = pairwise_sqdist(query_feats, prototypes);  // [Q, N]
  // score = -dist / temperature
  const auto inv_temp = exp(scale(log_temp, T(-1)));
  return log_softmax(scale(mul(dists, inv_temp), T(-1)));
}

template struct GlobalClassifierT<float>;
template struct GlobalClassifierT<double>;
template struct MetricHeadT<float>;
template struct MetricHeadT<double>;
template TensorT<float> global_loss(const GlobalClassifierT<float>&, const TensorT<float>&,
                                    const std::vector<std::int64_t>&);
template TensorT<double> global_loss(const GlobalClassifierT<double>&, const TensorT<double>&,
                                     const std::vector<std::int64_t>&);

}  // namespace cdfsl
