#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdfsl/tensor.hpp"

namespace cdfsl {

enum class Domain { source, target };

inline const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

/// One N-way K-shot task: K support and M query images per class, FSL labels
/// refined to 0..N-1 plus the original global class ids.
struct Episode {
  std::int64_t n_way = 0;
  std::int64_t k_shot = 0;
  std::int64_t m_query = 0;
  Domain domain = Domain::source;
  Tensor support_images;  // [N*K, c, h, w]
  Tensor query_images;    // [N*M, c, h, w]
  std::vector<std::int64_t> support_fsl_labels;
  std::vector<std::int64_t> query_fsl_labels;
  std::vector<std::int64_t> support_global_labels;
  std::vector<std::int64_t> query_global_labels;
};

}  // namespace cdfsl
