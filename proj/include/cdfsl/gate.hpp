#pragma once

#include <cstdint>
#include <vector>

#include "cdfsl/backbone.hpp"
#include "cdfsl/episode.hpp"
#include "cdfsl/rng.hpp"
#include "cdfsl/tensor.hpp"

namespace cdfsl {

struct BlockGateRange {
  std::int64_t block_index = 0;  // index into the embedding net's blocks
  std::int64_t offset = 0;       // first logit row of this block
  std::int64_t count = 0;        // number of gated filters in this block
};

struct GateBlockStats {
  std::int64_t block_index = 0;
  std::int64_t source_count = 0;
  std::int64_t target_count = 0;
};

/// Complementary per-block hard masks produced by one shared draw.
template <typename T>
struct MaskSetT {
  std::vector<TensorT<T>> source;
  std::vector<TensorT<T>> target;
};

/// Learnable per-filter domain logits, [F,2] with column 0 = source. Hard
/// binarization is a shared Gumbel-softmax draw during training and a
/// deterministic argmax (ties -> source) at inference.
template <typename T>
class GateMatrixT {
 public:
  GateMatrixT() = default;

  /// Logits drawn i.i.d. from Normal(0, 0.01); rows laid out block by block.
  static GateMatrixT init(const EmbeddingNetT<T>& net, Rng& rng);
  static GateMatrixT from_logits(TensorT<T> logits, std::vector<BlockGateRange> ranges);

  TensorT<T>& logits() { return logits_; }
  const TensorT<T>& logits() const { return logits_; }
  std::int64_t filter_count() const { return logits_.defined() ? logits_.dim(0) : 0; }
  const std::vector<BlockGateRange>& ranges() const { return ranges_; }

  /// One hard Gumbel-softmax sample over all filters; both domains' masks
  /// come from the same draw, so they are complementary per filter.
  /// Straight-through gradients reach the logits.
  MaskSetT<T> sample_hard_masks(T tau, Rng& rng) const;

  /// Deterministic binarization: filter assigned to source iff
  /// logit0 >= logit1. Detached from the tape.
  std::vector<TensorT<T>> infer_masks(Domain domain) const;

  /// Per-block source/target filter counts from the inference binarization.
  std::vector<GateBlockStats> statistics() const;

  GateMatrixT clone() const;

 private:
  TensorT<T> logits_;  // [F, 2]
  std::vector<BlockGateRange> ranges_;
};

using GateMatrix = GateMatrixT<float>;

extern template class GateMatrixT<float>;
extern template class GateMatrixT<double>;

}  // namespace cdfsl
