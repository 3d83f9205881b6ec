#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdfsl/episode.hpp"
#include "cdfsl/rng.hpp"

namespace cdfsl {

/// Parameters of the procedural two-domain benchmark. Class id sets of the
/// four splits are pairwise disjoint by construction.
struct SyntheticSpec {
  std::int64_t image_size = 32;
  std::int64_t source_train_classes = 20;
  std::int64_t target_aux_classes = 10;
  std::int64_t target_test_classes = 10;
  std::int64_t source_test_classes = 10;
  std::int64_t images_per_source_class = 200;
  std::int64_t images_per_aux_class = 5;
  std::int64_t images_per_target_test_class = 50;
  std::int64_t images_per_source_test_class = 50;
  double source_noise = 0.02;
  double target_noise = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetSplit {
  std::string name;
  Domain domain = Domain::source;
  std::int64_t image_size = 0;
  std::int64_t images_per_class = 0;
  std::vector<std::int64_t> class_ids;  // sorted global ids
  std::vector<std::int64_t> labels;     // global id per image
  std::vector<float> pixels;            // [count, 3, s, s] row-major

  std::int64_t count() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t pixels_per_image() const { return 3 * image_size * image_size; }
  const float* image(std::int64_t index) const;
  /// Dense index of a global class id within this split (for the global
  /// classifiers). Throws LabelError for foreign ids.
  std::int64_t class_index(std::int64_t global_id) const;
};

struct Benchmark {
  SyntheticSpec spec;
  DatasetSplit source_train;  // D_src
  DatasetSplit target_aux;    // D_tgt (5 images per class by default)
  DatasetSplit target_test;   // D_test
  DatasetSplit source_test;   // held-out source classes
};

/// Deterministic under spec.seed: same spec -> byte-identical pixel arrays.
Benchmark generate_benchmark(const SyntheticSpec& spec);

enum class QueryPolicy {
  strict,        // support and query indices sampled without replacement
  jitter_reuse,  // queries resample support images with augmentation jitter
};

/// Uniform class and image sampling without replacement; fsl labels follow
/// the sampled-class order. With jitter_reuse, splits too small for K+M
/// distinct images per class draw queries from the support images instead,
/// each with an independent small rotation/translation/scale jitter.
Episode sample_episode(const DatasetSplit& split, std::int64_t n_way, std::int64_t k_shot,
                       std::int64_t m_query, Rng& rng, QueryPolicy policy = QueryPolicy::strict);

/// Raw-float export with a manifest (class ids, labels, split membership).
void export_benchmark(const Benchmark& bench, const std::string& dir);
Benchmark load_benchmark(const std::string& dir);

}  // namespace cdfsl
