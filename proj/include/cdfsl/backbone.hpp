#pragma once

#include <cstdint>
#include <vector>

#include "cdfsl/ops.hpp"
#include "cdfsl/rng.hpp"
#include "cdfsl/tensor.hpp"

namespace cdfsl {

struct BlockSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_size = 3;
  std::int64_t stride = 1;
  bool gated = false;
};

/// conv3x3 -> batch-norm -> relu stage. Blocks 0..2 finish with 2x2 max
/// pooling; the last block feeds global average pooling instead.
template <typename T>
struct ConvBlockT {
  BlockSpec spec;
  TensorT<T> weight;    // [out, in, k, k]
  TensorT<T> bn_gamma;  // [out]
  TensorT<T> bn_beta;   // [out]
  std::vector<T> bn_running_mean;
  std::vector<T> bn_running_var;
};

/// Four-block embedding module. The last decompose_depth blocks are gated:
/// after their activation each channel is multiplied by a domain mask entry.
template <typename T>
class EmbeddingNetT {
 public:
  EmbeddingNetT() = default;

  /// channels must list 4 output widths; decompose_depth in [0,4] marks the
  /// last depth blocks as gated.
  static EmbeddingNetT build(const std::vector<std::int64_t>& channels,
                             std::int64_t decompose_depth, std::int64_t in_channels,
                             std::int64_t image_size, Rng& rng);

  /// Standard path when masks is empty; otherwise masks holds one
  /// [out_channels] tensor per gated block, in block order. use_batch_stats
  /// chooses between batch statistics (updating running buffers) and the
  /// stored running statistics.
  TensorT<T> forward(const TensorT<T>& images, const std::vector<TensorT<T>>& masks,
                     bool use_batch_stats);

  /// Post-activation (pre-pool, unmasked) feature map of one block, computed
  /// with running statistics. Used for activation-map export.
  TensorT<T> activation_at(const TensorT<T>& images, std::int64_t block_index);

  std::int64_t feature_dim() const { return blocks_.back().spec.out_channels; }
  std::int64_t gated_filter_count() const;
  std::vector<std::int64_t> gated_block_indices() const;
  std::int64_t decompose_depth() const { return decompose_depth_; }
  std::int64_t in_channels() const { return blocks_.front().spec.in_channels; }
  std::int64_t image_size() const { return image_size_; }

  std::vector<ConvBlockT<T>>& blocks() { return blocks_; }
  const std::vector<ConvBlockT<T>>& blocks() const { return blocks_; }

  std::vector<TensorT<T>> parameters() const;
  EmbeddingNetT clone() const;

 private:
  std::vector<ConvBlockT<T>> blocks_;
  std::int64_t decompose_depth_ = 0;
  std::int64_t image_size_ = 0;
};

using EmbeddingNet = EmbeddingNetT<float>;

extern template class EmbeddingNetT<float>;
extern template class EmbeddingNetT<double>;

}  // namespace cdfsl
