#include "cdfsl/gate.hpp"

#include "cdfsl/errors.hpp"
#include "cdfsl/ops.hpp"

namespace cdfsl {

template <typename T>
GateMatrixT<T> GateMatrixT<T>::init(const EmbeddingNetT<T>& net, Rng& rng) {
  GateMatrixT g;
  std::int64_t offset = 0;
  for (const auto idx : net.gated_block_indices()) {
    const auto count = net.blocks()[static_cast<std::size_t>(idx)].spec.out_channels;
    g.ranges_.push_back({idx, offset, count});
    offset += count;
  }
  std::vector<T> logits(static_cast<std::size_t>(offset * 2));
  for (auto& v : logits) v = static_cast<T>(rng.normal(0.0, 0.01));
  g.logits_ = TensorT<T>::from_data({offset, 2}, std::move(logits), true);
  return g;
}

template <typename T>
GateMatrixT<T> GateMatrixT<T>::from_logits(TensorT<T> logits, std::vector<BlockGateRange> ranges) {
  std::int64_t total = 0;
  for (const auto& r : ranges) total += r.count;
  if (!logits.defined() || logits.shape() != Shape{total, 2}) {
    throw DimensionError("gate logits shape does not match block ranges");
  }
  GateMatrixT g;
  g.logits_ = std::move(logits);
  g.ranges_ = std::move(ranges);
  return g;
}

template <typename T>
MaskSetT<T> GateMatrixT<T>::sample_hard_masks(T tau, Rng& rng) const {
  const auto sample = gumbel_softmax(logits_, tau, rng, /*hard=*/true);
  MaskSetT<T> out;
  for (const auto& r : ranges_) {
    const auto rows = slice_rows(sample, r.offset, r.offset + r.count);
    out.source.push_back(select_column(rows, 0));
    out.target.push_back(select_column(rows, 1));
  }
  return out;
}

template <typename T>
std::vector<TensorT<T>> GateMatrixT<T>::infer_masks(Domain domain) const {
  std::vector<TensorT<T>> out;
  const auto& l = logits_.data();
  for (const auto& r : ranges_) {
    std::vector<T> mask(static_cast<std::size_t>(r.count));
    for (std::int64_t i = 0; i < r.count; ++i) {
      const std::size_t row = static_cast<std::size_t>((r.offset + i) * 2);
      const bool source = l[row] >= l[row + 1];  // tie -> source
      mask[static_cast<std::size_t>(i)] =
          (domain == Domain::source) == source ? T(1) : T(0);
    }
    out.push_back(TensorT<T>::from_data({r.count}, std::move(mask), false));
  }
  return out;
}

template <typename T>
std::vector<GateBlockStats> GateMatrixT<T>::statistics() const {
  std::vector<GateBlockStats> out;
  const auto& l = logits_.data();
  for (const auto& r : ranges_) {
    GateBlockStats s;
    s.block_index = r.block_index;
    for (std::int64_t i = 0; i < r.count; ++i) {
      const std::size_t row = static_cast<std::size_t>((r.offset + i) * 2);
      if (l[row] >= l[row + 1]) {
        ++s.source_count;
      } else {
        ++s.target_count;
      }
    }
    out.push_back(s);
  }
  return out;
}

template <typename T>
GateMatrixT<T> GateMatrixT<T>::clone() const {
  GateMatrixT g;
  g.ranges_ = ranges_;
  if (logits_.defined()) {
    g.logits_ = TensorT<T>::from_data(logits_.shape(), logits_.data(), logits_.requires_grad());
  }
  return g;
}

template class GateMatrixT<float>;
template class GateMatrixT<double>;

}  // namespace cdfsl
