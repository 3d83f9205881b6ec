#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace cdfsl {

/// Mixes two 64-bit values into one (splitmix64 finalizer over the sum).
/// Used to derive independent child seeds from a master seed plus a tag.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

/// Deterministic, serializable PRNG (xoshiro256++) with hand-rolled
/// distributions. No std::*_distribution is used anywhere, so identical
/// seeds produce identical draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Box-Muller; the sine mate is discarded so the state stays 4 words.
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Uniform integer in [0, n), n > 0. Lemire multiply-shift (no rejection).
  std::int64_t uniform_int(std::int64_t n);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const { return state_ == other.state_; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace cdfsl
