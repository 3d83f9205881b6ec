#include "cdfsl/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "cdfsl/errors.hpp"

namespace cdfsl {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x632be59bd9b4e019ull * (b + 1);
  return splitmix64(x);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  // u1 in (0,1] so log() is finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
}

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw ParameterError("uniform_int requires n > 0, got " + std::to_string(n));
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::int64_t>(wide >> 64);
}

std::string Rng::serialize() const {
  char buf[4 * 17 + 1];
  std::snprintf(buf, sizeof(buf), "%016llx.%016llx.%016llx.%016llx",
                static_cast<unsigned long long>(state_[0]),
                static_cast<unsigned long long>(state_[1]),
                static_cast<unsigned long long>(state_[2]),
                static_cast<unsigned long long>(state_[3]));
  return std::string(buf);
}

Rng Rng::deserialize(const std::string& text) {
  Rng r(0);
  unsigned long long w[4];
  if (std::sscanf(text.c_str(), "%llx.%llx.%llx.%llx", &w[0], &w[1], &w[2], &w[3]) != 4) {
    throw IoError("invalid RNG state string: " + text);
  }
  for (int i = 0; i < 4; ++i) r.state_[static_cast<std::size_t>(i)] = w[i];
  return r;
}

}  // namespace cdfsl
