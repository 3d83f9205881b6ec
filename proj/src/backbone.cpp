#include "cdfsl/backbone.hpp"

#include <cmath>

#include "cdfsl/errors.hpp"

namespace cdfsl {

template <typename T>
EmbeddingNetT<T> EmbeddingNetT<T>::build(const std::vector<std::int64_t>& channels,
                                         std::int64_t decompose_depth, std::int64_t in_channels,
                                         std::int64_t image_size, Rng& rng) {
  if (channels.size() != 4) {
    throw ConfigError("embedding net expects 4 block widths, got " +
                      std::to_string(channels.size()));
  }
  if (decompose_depth < 0 || decompose_depth > 4) {
    throw ConfigError("decompose_depth must lie in [0,4], got " +
                      std::to_string(decompose_depth));
  }
  if (image_size < 8) {
    throw ConfigError("image_size must be at least 8, got " + std::to_string(image_size));
  }
  EmbeddingNetT net;
  net.decompose_depth_ = decompose_depth;
  net.image_size_ = image_size;
  std::int64_t in_c = in_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    ConvBlockT<T> block;
    block.spec.in_channels = in_c;
    block.spec.out_channels = channels[b];
    block.spec.kernel_size = 3;
    block.spec.stride = 1;
    block.spec.gated = static_cast<std::int64_t>(b) >= 4 - decompose_depth;
    const std::int64_t fan_in = in_c * 9;
    const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<T> w(static_cast<std::size_t>(channels[b] * fan_in));
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, 1.0)) * stddev;
    block.weight = TensorT<T>::from_data({channels[b], in_c, 3, 3}, std::move(w), true);
    block.bn_gamma = TensorT<T>::full({channels[b]}, T(1), true);
    block.bn_beta = TensorT<T>::full({channels[b]}, T(0), true);
    block.bn_running_mean.assign(static_cast<std::size_t>(channels[b]), T(0));
    block.bn_running_var.assign(static_cast<std::size_t>(channels[b]), T(1));
    net.blocks_.push_back(std::move(block));
    in_c = channels[b];
  }
  return net;
}

template <typename T>
TensorT<T> EmbeddingNetT<T>::forward(const TensorT<T>& images,
                                     const std::vector<TensorT<T>>& masks,
                                     bool use_batch_stats) {
  if (images.rank() != 4 || images.dim(1) != in_channels() || images.dim(2) != image_size_ ||
      images.dim(3) != image_size_) {
    throw DimensionError("embedding forward expects [b," + std::to_string(in_channels()) + "," +
                         std::to_string(image_size_) + "," + std::to_string(image_size_) +
                         "], got " + shape_str(images.shape()));
  }
  const auto gated = gated_block_indices();
  if (!masks.empty() && masks.size() != gated.size()) {
    throw DimensionError("expected " + std::to_string(gated.size()) + " masks, got " +
                         std::to_string(masks.size()));
  }
  TensorT<T> x = images;
  std::size_t mask_slot = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& block = blocks_[b];
    x = conv2d(x, block.weight, block.spec.stride, /*padding=*/1);
    x = batch_norm_2d(x, block.bn_gamma, block.bn_beta, block.bn_running_mean,
                      block.bn_running_var, use_batch_stats);
    x = relu(x);
    if (block.spec.gated && !masks.empty()) {
      const auto& mask = masks[mask_slot++];
      if (mask.shape() != Shape{block.spec.out_channels}) {
        throw DimensionError("mask shape " + shape_str(mask.shape()) + " does not match block " +
                             std::to_string(b) + " width " +
                             std::to_string(block.spec.out_channels));
      }
      x = mul(x, mask);
    }
    if (b + 1 < blocks_.size()) {
      x = max_pool_2d(x, 2, 2);
    } else {
      x = global_avg_pool(x);
    }
  }
  return x;
}

template <typename T>
TensorT<T> EmbeddingNetT<T>::activation_at(const TensorT<T>& images, std::int64_t block_index) {
  if (block_index < 0 || block_index >= static_cast<std::int64_t>(blocks_.size())) {
    throw ConfigError("block index " + std::to_string(block_index) + " out of range");
  }
  TensorT<T> x = images;
  for (std::int64_t b = 0; b <= block_index; ++b) {
    auto& block = blocks_[static_cast<std::size_t>(b)];
    x = conv2d(x, block.weight, block.spec.stride, 1);
    x = batch_norm_2d(x, block.bn_gamma, block.bn_beta, block.bn_running_mean,
                      block.bn_running_var, /*training=*/false);
    x = relu(x);
    if (b == block_index) return x;
    if (b + 1 < static_cast<std::int64_t>(blocks_.size())) x = max_pool_2d(x, 2, 2);
  }
  return x;
}

template <typename T>
std::int64_t EmbeddingNetT<T>::gated_filter_count() const {
  std::int64_t total = 0;
  for (const auto& b : blocks_) {
    if (b.spec.gated) total += b.spec.out_channels;
  }
  return total;
}

template <typename T>
std::vector<std::int64_t> EmbeddingNetT<T>::gated_block_indices() const {
  std::vector<std::int64_t> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (blocks_[b].spec.gated) out.push_back(static_cast<std::int64_t>(b));
  }
  return out;
}

template <typename T>
std::vector<TensorT<T>> EmbeddingNetT<T>::parameters() const {
  std::vector<TensorT<T>> out;
  for (const auto& b : blocks_) {
    out.push_back(b.weight);
    out.push_back(b.bn_gamma);
    out.push_back(b.bn_beta);
  }
  return out;
}

template <typename T>
EmbeddingNetT<T> EmbeddingNetT<T>::clone() const {
  EmbeddingNetT out;
  out.decompose_depth_ = decompose_depth_;
  out.image_size_ = image_size_;
  for (const auto& b : blocks_) {
    ConvBlockT<T> nb;
    nb.spec = b.spec;
    nb.weight = TensorT<T>::from_data(b.weight.shape(), b.weight.data(), b.weight.requires_grad());
    nb.bn_gamma =
        TensorT<T>::from_data(b.bn_gamma.shape(), b.bn_gamma.data(), b.bn_gamma.requires_grad());
    nb.bn_beta =
        TensorT<T>::from_data(b.bn_beta.shape(), b.bn_beta.data(), b.bn_beta.requires_grad());
    nb.bn_running_mean = b.bn_running_mean;
    nb.bn_running_var = b.bn_running_var;
    out.blocks_.push_back(std::move(nb));
  }
  return out;
}

template class EmbeddingNetT<float>;
template class EmbeddingNetT<double>;

}  // namespace cdfsl
